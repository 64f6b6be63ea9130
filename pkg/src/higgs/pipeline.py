"""One aggregation worker per tree level.

The inserting thread fills leaves.  Sealed non-leaf nodes are handed to the
worker that owns their level, in seal order.  A worker waits on each child's
``ready`` event before folding it in, so a parent never reads a half-built
child.  Kernels release the GIL, so levels overlap on multi-core hosts.
"""

from __future__ import annotations

import queue
import threading

_STOP = object()


class LevelPipeline:
    def __init__(self, tree=None):
        self.tree = tree
        self._queues: dict[int, queue.Queue] = {}
        self._threads: list[threading.Thread] = []
        self._errors: list[BaseException] = []
        self._closed = False

    def bind(self, tree) -> None:
        self.tree = tree
        tree.aggregator = self

    def submit(self, node) -> None:
        if self._closed:
            raise RuntimeError("pipeline is closed")
        q = self._queues.get(node.level)
        if q is None:
            q = queue.Queue()
            self._queues[node.level] = q
            th = threading.Thread(target=self._run, args=(q,), name=f"higgs-level-{node.level}", daemon=True)
            self._threads.append(th)
            th.start()
        q.put(node)

    def _run(self, q: queue.Queue) -> None:
        while True:
            node = q.get()
            if node is _STOP:
                return
            try:
                self.tree.aggregate(node)
            except BaseException as exc:  # surfaced from close()
                self._errors.append(exc)
                node.ready.set()

    def close(self) -> None:
        """Drain every level and join the workers; re-raises the first worker error."""
        if self._closed:
            return
        self._closed = True
        for level in sorted(self._queues):
            self._queues[level].put(_STOP)
        for th in self._threads:
            th.join()
        if self._errors:
            raise self._errors[0]

    @property
    def worker_count(self) -> int:
        return len(self._threads)


def pipelined_tree(cfg=None):
    """A :class:`~higgs.tree.SummaryTree` whose aggregation runs on per-level threads."""
    from higgs.tree import SummaryTree

    tree = SummaryTree(cfg)
    LevelPipeline().bind(tree)
    return tree
