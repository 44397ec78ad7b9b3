# --- Start of File: utils/error_utils.py ---
import logging
import traceback

logger = logging.getLogger(__name__)

_TRUNCATION_MARK = "\n ... [TRUNCATED] ... \n"


def _truncate_middle(text: str, max_length: int) -> str:
    if len(text) <= max_length:
        return text
    keep = max_length - len(_TRUNCATION_MARK)
    if keep <= 0:
        return text[:max_length]
    head = keep // 2
    return f"{text[:head]}{_TRUNCATION_MARK}{text[-(keep - head):]}"


def format_error(exception: Exception, include_traceback: bool = True, max_length: int = 3000) -> str:
    """
    Formats an exception for the run ledger and the CLI.

    Args:
        exception (Exception): The caught exception.
        include_traceback (bool): Append the last frames of the traceback.
        max_length (int): Longer strings keep their beginning and end around
                          a "[TRUNCATED]" marker.

    Returns:
        str: "<Type>: <message>" plus an optional traceback snippet.
    """
    try:
        summary = f"{type(exception).__name__}: {exception}"
        if include_traceback and exception.__traceback__ is not None:
            try:
                frames = traceback.format_exception(type(exception), exception, exception.__traceback__, limit=15)
                summary += "\n--- Traceback Snippet ---\n" + "".join(frames[-10:]).strip()
            except Exception as tb_err:
                logger.warning(f"Could not format traceback for '{summary[:100]}': {tb_err}")
                summary += f"\n(Traceback formatting failed: {tb_err})"
        return _truncate_middle(summary, max_length)
    except Exception as fmt_err:
        logger.error(f"CRITICAL: Failed to format {type(exception).__name__}: {fmt_err}", exc_info=True)
        return f"Error formatting exception: {str(exception)[:max_length]}"


def error_row(check_name: str, instance: str, exception: Exception) -> dict:
    """ Oracle/acceptance report row for a check that raised instead of returning a residual. """
    return {
        'check_name': check_name,
        'instance': instance,
        'max_residual': float('inf'),
        'pass': False,
        'error': format_error(exception, include_traceback=False, max_length=500),
    }

# --- END OF FILE: utils/error_utils.py ---
