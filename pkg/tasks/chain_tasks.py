# --- Start of File: tasks/chain_tasks.py ---
import hashlib
import logging
import json
from concurrent.futures import ThreadPoolExecutor
from threading import Lock

from celery import Task, group

from analysis import sampler
from analysis.core import Graph, PottsError
from analysis.graphgen import GenSpec, random_regular
from config import Config

from celery_app import celery_app

logger = logging.getLogger(__name__)
config = Config()

RETRYABLE_EXCEPTIONS = (ConnectionError, TimeoutError, OSError)
NON_RETRYABLE_EXCEPTIONS = (ValueError, TypeError, KeyError, json.JSONDecodeError, PottsError)

# =============================================================================
# === Graph Payloads ===
# =============================================================================
# Eager workers share this process, so graphs travel by key; a broker
# worker rebuilds them from the GenSpec or the edge list.
_GRAPHS = {}
_GRAPHS_LOCK = Lock()


def graph_key(graph):
    digest = hashlib.sha256(graph.edges.tobytes())
    digest.update(str(graph.n).encode())
    return digest.hexdigest()


def graph_payload(graph, gen_spec=None, with_edges=False):
    """ JSON-ready description of a graph; registers it for in-process lookup. """
    key = graph_key(graph)
    with _GRAPHS_LOCK:
        _GRAPHS[key] = graph
    payload = {'key': key, 'gen': gen_spec.to_dict() if gen_spec is not None else None}
    if with_edges and gen_spec is None:
        payload['n'] = graph.n
        payload['edges'] = graph.edge_list()
    return payload


def resolve_graph(payload):
    key = payload.get('key')
    with _GRAPHS_LOCK:
        cached = _GRAPHS.get(key)
    if cached is not None:
        return cached
    if payload.get('gen'):
        graph = random_regular(GenSpec.from_dict(payload['gen']))
    elif payload.get('edges') is not None:
        graph = Graph.from_edges(int(payload['n']), payload['edges'])
    else:
        raise KeyError(f"Graph {key} is not registered in this worker and the payload carries no recipe")
    with _GRAPHS_LOCK:
        _GRAPHS[graph_key(graph)] = graph
    return graph


# =============================================================================
# === Chain Task ===
# =============================================================================

@celery_app.task(
    bind=True,
    name='tasks.chain_tasks.run_chain_task',
    autoretry_for=RETRYABLE_EXCEPTIONS,
    retry_kwargs={'max_retries': 2, 'countdown': 10}
)
def run_chain_task(self: Task, payload: dict, job: dict):
    """ (Celery Task) One Swendsen-Wang chain; returns its estimator reports. """
    chain_job = sampler.ChainJob.from_dict(job)
    logger.info(f"--- Starting Chain Task (Attempt {self.request.retries + 1}) #{chain_job.index}: {chain_job.params} ---")
    try:
        graph = resolve_graph(payload)
        result = sampler.run_job(graph, chain_job)
        logger.info(f"--- Chain Task SUCCESS #{chain_job.index} ---")
        return result
    except NON_RETRYABLE_EXCEPTIONS as e:
        logger.error(f"--- Chain Task NON-RETRYABLE FAIL #{chain_job.index} --- Error: {e}", exc_info=True)
        raise
    except Exception as e:
        logger.warning(f"--- Chain Task FAILED (Will Retry If Possible) #{chain_job.index} "
                       f"(Attempt {self.request.retries + 1}) --- Error: {e}", exc_info=True)
        raise


def dispatch_chains(graph, jobs, threads=None, gen_spec=None):
    """
    Runs ChainJobs and returns their results ordered by job index.

    Eager mode runs the task body in a thread pool of `threads` workers;
    with a broker the jobs go out as one Celery group.
    """
    jobs = sorted(jobs, key=lambda j: j.index)
    threads = max(1, int(threads or config.DEFAULT_THREADS))
    if not jobs:
        return []
    if celery_app.conf.task_always_eager:
        payload = graph_payload(graph, gen_spec)
        logger.info(f"Dispatching {len(jobs)} chain(s) in-process on {threads} thread(s)")

        def _run(job):
            return run_chain_task.apply(args=(payload, job.to_dict())).get()

        if threads == 1:
            results = [_run(j) for j in jobs]
        else:
            with ThreadPoolExecutor(max_workers=threads, thread_name_prefix='chain') as pool:
                results = list(pool.map(_run, jobs))
    else:
        payload = graph_payload(graph, gen_spec, with_edges=True)
        logger.info(f"Dispatching {len(jobs)} chain(s) to the broker at {config.CELERY_BROKER_URL}")
        results = group(run_chain_task.s(payload, j.to_dict()) for j in jobs).apply_async().get()
    return sorted(results, key=lambda r: r['index'])


def chain_runner(graph, threads=None, gen_spec=None):
    """ Runner callable for sampler.free_energy_ti and friends. """
    def runner(jobs):
        return dispatch_chains(graph, jobs, threads, gen_spec)
    return runner

# --- END OF FILE: tasks/chain_tasks.py ---
