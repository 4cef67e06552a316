"""
并行与计时工具模块

提供线程池映射和计时器。
"""

import time
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

T = TypeVar('T')
R = TypeVar('R')


def map_with_concurrency(
    func: Callable[[T], R],
    items: Iterable[T],
    max_workers: int = 1
) -> List[R]:
    """
    并发映射，限制线程数，结果顺序与输入一致

    Args:
        func: 对单个元素执行的函数
        items: 输入序列
        max_workers: 最大线程数，为1时直接顺序执行

    Returns:
        List[R]: 结果列表
    """
    items = list(items)
    if max_workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]

    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        return list(executor.map(func, items))


class Timer:
    """计时器上下文管理器"""

    def __init__(self, name: str = "Timer"):
        """
        初始化计时器

        Args:
            name: 计时器名称
        """
        self.name = name
        self.start_time: Optional[float] = None
        self.end_time: Optional[float] = None

    def __enter__(self):
        """开始计时"""
        self.start_time = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        """结束计时"""
        self.end_time = time.perf_counter()

    @property
    def elapsed(self) -> float:
        """已用时间（秒），计时未结束时返回当前已用时间"""
        if self.start_time is None:
            return 0.0
        end = self.end_time if self.end_time is not None else time.perf_counter()
        return end - self.start_time
