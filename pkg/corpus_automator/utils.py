import asyncio
import json
import os
import shutil
import time
from typing import Any, Callable, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, TypeVar

from tqdm import tqdm

from .logging_setup import logger

T = TypeVar("T")
R = TypeVar("R")


def safe_file_operation(operation_func, *args, max_retries: int = 3, **kwargs):
    """Safely perform file operations with retry logic."""
    for attempt in range(max_retries):
        try:
            return operation_func(*args, **kwargs)
        except (OSError, IOError, PermissionError) as e:
            if attempt < max_retries - 1:
                logger.warning(f"File operation failed (attempt {attempt + 1}/{max_retries}): {e}")
                time.sleep(0.5)
            else:
                logger.error(f"File operation failed after {max_retries} attempts: {e}")
                raise


def atomic_write_bytes(path: str, data: bytes):
    """Write to a temporary file first, then move it over ``path``."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    temp_file = path + '.tmp'

    def save_operation():
        with open(temp_file, 'wb') as f:
            f.write(data)
        shutil.move(temp_file, path)

    try:
        safe_file_operation(save_operation)
    finally:
        if os.path.exists(temp_file):
            try:
                os.remove(temp_file)
            except OSError:
                pass


def atomic_write_text(path: str, text: str):
    atomic_write_bytes(path, text.encode('utf-8'))


def dumps_jsonl(rows: Iterable[Dict[str, Any]]) -> str:
    """Serialize rows deterministically: sorted keys, one object per line."""
    return "".join(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n" for row in rows)


def write_jsonl(path: str, rows: Iterable[Dict[str, Any]]):
    atomic_write_text(path, dumps_jsonl(rows))


def iter_jsonl(path: str) -> Iterator[Tuple[int, Dict[str, Any]]]:
    """Yield ``(line_no, object)`` for every non-blank line of a JSONL file."""
    with open(path, 'r', encoding='utf-8') as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            yield line_no, json.loads(line)


def read_jsonl(path: str) -> List[Dict[str, Any]]:
    return [row for _, row in iter_jsonl(path)]


def validate_jsonl_file(file_path: str) -> Tuple[bool, Optional[str]]:
    """Validate that every line of a file is a JSON object."""
    if not os.path.exists(file_path):
        return False, "File does not exist"
    try:
        for line_no, row in iter_jsonl(file_path):
            if not isinstance(row, dict):
                return False, f"Line {line_no} is not a JSON object"
        return True, None
    except json.JSONDecodeError as e:
        return False, f"Invalid JSON: {e}"
    except Exception as e:
        return False, f"Error reading file: {e}"


async def _gather_bounded(items: Sequence[T], func: Callable[[T], R], max_concurrent: int,
                          progress: Optional[str]) -> List[Any]:
    semaphore = asyncio.Semaphore(max_concurrent)
    bar = tqdm(total=len(items), desc=progress, disable=progress is None, leave=False)

    async def run_single_with_semaphore(item):
        async with semaphore:
            try:
                return await asyncio.to_thread(func, item)
            finally:
                bar.update(1)

    try:
        tasks = [run_single_with_semaphore(item) for item in items]
        return await asyncio.gather(*tasks, return_exceptions=True)
    finally:
        bar.close()


def run_bounded(items: Sequence[T], func: Callable[[T], R], max_concurrent: int = 1,
                progress: Optional[str] = None) -> List[Any]:
    """Apply ``func`` to every item with at most ``max_concurrent`` in flight.

    Results come back in input order; an item whose call raised yields the
    exception object instead of a result, so one failure never aborts the batch.
    """
    if max_concurrent < 1:
        raise ValueError("max_concurrent must be >= 1")
    items = list(items)
    if not items:
        return []
    if max_concurrent == 1:
        results = []
        for item in tqdm(items, desc=progress, disable=progress is None, leave=False):
            try:
                results.append(func(item))
            except Exception as e:
                results.append(e)
        return results
    return asyncio.run(_gather_bounded(items, func, max_concurrent, progress))
