import logging
import queue
import threading
from typing import Callable, List

log = logging.getLogger(__name__)


class SweepWorker(threading.Thread):
    """Pulls grid points off a shared queue until it sees the stop marker."""

    STOP = None

    def __init__(self, jobs: "queue.Queue", results: dict, run_point: Callable, lock: threading.Lock):
        super().__init__()
        self.jobs = jobs
        self.results = results
        self.run_point = run_point
        self.lock = lock
        self.daemon = True
        self.completed = 0

    def run(self):
        while True:
            job = self.jobs.get()
            try:
                if job is self.STOP:
                    break
                index, point = job
                try:
                    outcome = self.run_point(point)
                except Exception as e:
                    log.error("grid point %d failed: %s", index, e)
                    outcome = e
                with self.lock:
                    self.results[index] = outcome
                self.completed += 1
            finally:
                self.jobs.task_done()
        log.debug("%s finished after %d points", self.name, self.completed)


def run_pool(points: List, run_point: Callable, workers: int) -> List:
    """Run every point and return outcomes in input order; failures come back as exceptions."""
    jobs: "queue.Queue" = queue.Queue()
    results: dict = {}
    lock = threading.Lock()
    pool = [SweepWorker(jobs, results, run_point, lock) for _ in range(max(1, min(workers, len(points))))]
    for w in pool:
        w.start()
    for i, p in enumerate(points):
        jobs.put((i, p))
    for _ in pool:
        jobs.put(SweepWorker.STOP)
    for w in pool:
        w.join()
    return [results[i] for i in range(len(points))]
