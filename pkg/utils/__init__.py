# Output formats, error formatting and plotting helpers.
# from .io_utils import write_csv, write_json, read_graph
# from .error_utils import format_error
