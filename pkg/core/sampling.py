"""
确定性抽样：用 numpy 的 PCG64 流产生 62 位二进有理点，
在精确条件概率的累积区间上定位下一个符号
"""

import logging
from fractions import Fraction

import numpy as np

from .errors import PreconditionViolated
from .measures import Semimeasure, Str, predictive_vector

logger: logging.Logger = logging.getLogger(__name__)

SAMPLE_BITS = 62


def locate_symbol(probs: tuple[Fraction, ...], u: Fraction) -> int:
    """返回累积区间包含 u 的符号"""
    cumulative = Fraction(0)
    for a, p in enumerate(probs):
        cumulative += p
        if u < cumulative:
            return a
    raise PreconditionViolated(f"抽样点 {u} 落在条件概率总和 {cumulative} 之外")


def sample_sequence(mu: Semimeasure, n: int, seed: int) -> Str:
    """
    按 μ 的精确条件概率抽取长度为 n 的前缀

    Args:
        mu: 测度（缺损的半测度可能在抽样中途失败）
        n: 序列长度
        seed: 非负整数种子，相同种子得到相同序列
    """
    rng = np.random.default_rng(seed)
    draws = rng.integers(0, 2**SAMPLE_BITS, size=n, dtype=np.int64)
    omega: list[int] = []
    for raw in draws:
        u = Fraction(int(raw), 2**SAMPLE_BITS)
        omega.append(locate_symbol(predictive_vector(mu, tuple(omega)), u))
    logger.debug(f"种子 {seed} 抽样完成，长度 {n}")
    return tuple(omega)


def sample_sequences(mu: Semimeasure, n: int, seed: int, count: int) -> list[Str]:
    """种子 seed, seed+1, ..., seed+count-1 各抽一条"""
    return [sample_sequence(mu, n, seed + i) for i in range(count)]
