# This file makes the 'analysis' directory a Python package.
# Numerical core: core, bethe, treeexact, oracle, graphgen, sampler.
