"""
Run independent jobs across worker threads.

See BatchProcessor for usage.
"""

import queue
import threading
import traceback
import logging

LOGGER = logging.getLogger(__name__)


class JobResult:
    """The outcome of one job: its value, or the exception it raised."""

    # pylint: disable=too-few-public-methods

    def __init__(self, index, value=None, error=None):
        self.index = index
        self.value = value
        self.error = error

    @property
    def ok(self):
        """Did the job finish without raising?"""
        return self.error is None


class BatchProcessor:
    """Run a function over a list of items, optionally in worker threads.

    With nthreads of 1 (or less) everything runs inline in the calling
    thread, which is the reproducible mode.  Otherwise jobs are placed on a
    queue and pulled by daemon worker threads, one queue per call.  Either
    way results come back in item order, so any reduction done over them
    afterwards happens in a fixed order.
    """

    def __init__(self, nthreads=1):
        self.nthreads = max(1, int(nthreads or 1))

    def run(self, func, items):
        """Apply func to every item and return a list of JobResult objects."""
        items = list(items)
        if self.nthreads == 1 or len(items) < 2:
            return [self._call(func, idx, item) for idx, item in enumerate(items)]
        results = [None] * len(items)
        queue_jobs = queue.Queue()
        for idx, item in enumerate(items):
            queue_jobs.put((idx, item))
        nworkers = min(self.nthreads, len(items))
        LOGGER.debug("Starting %d worker threads for %d jobs", nworkers, len(items))
        for _ in range(nworkers):
            thread = threading.Thread(
                target=self._worker, args=(func, queue_jobs, results), daemon=True)
            thread.start()
        # join blocks until every job placed on the queue is both taken by a
        # worker and marked done.
        queue_jobs.join()
        return results

    def map(self, func, items):
        """Apply func to every item and return the values in order.

        If any job raised, the exception from the lowest-index failed job is
        re-raised here."""
        results = self.run(func, items)
        for result in results:
            if not result.ok:
                raise result.error
        return [result.value for result in results]

    @staticmethod
    def _call(func, idx, item):
        # pylint: disable=broad-except
        try:
            return JobResult(idx, value=func(item))
        except Exception as exception:
            return JobResult(idx, error=exception)

    def _worker(self, func, queue_jobs, results):
        """Pull (index, item) jobs from the queue until it's empty.

        Exceptions are logged and stored on the result, never raised here."""
        while True:
            try:
                idx, item = queue_jobs.get_nowait()
            except queue.Empty:
                return
            try:
                result = self._call(func, idx, item)
                if not result.ok:
                    LOGGER.error("Job %d failed: %s", idx, result.error)
                    LOGGER.debug("".join(traceback.format_exception(
                        type(result.error), result.error, result.error.__traceback__)))
                results[idx] = result
            finally:
                queue_jobs.task_done()
