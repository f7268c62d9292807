"""
工作精度数值模块
概率层只使用精确有理数；平方根、对数、指数在这里按可配置的二进制精度计算
"""

import math
from collections.abc import Iterator
from contextlib import contextmanager
from decimal import ROUND_CEILING, ROUND_FLOOR, Decimal, localcontext
from fractions import Fraction

DEFAULT_PRECISION = 100
TOLERANCE_SLACK_BITS = 20
LOW_PRECISION_WARNING_BITS = 64


def digits_for_bits(bits: int) -> int:
    """二进制位数换算为十进制有效数字（额外保留 5 位）"""
    return math.ceil(bits * math.log10(2)) + 5


@contextmanager
def working_precision(bits: int = DEFAULT_PRECISION) -> Iterator[None]:
    """在当前线程内切换 Decimal 精度"""
    with localcontext() as ctx:
        ctx.prec = digits_for_bits(bits)
        yield


def tolerance(bits: int = DEFAULT_PRECISION) -> Decimal:
    """不等式比较容差 2^-(precision-20)"""
    with working_precision(bits):
        return Decimal(2) ** -(bits - TOLERANCE_SLACK_BITS)


def to_decimal(value: Fraction | Decimal | int) -> Decimal:
    if isinstance(value, Decimal):
        return +value
    if isinstance(value, int):
        return Decimal(value)
    return Decimal(value.numerator) / Decimal(value.denominator)


def dsqrt(value: Fraction | Decimal | int) -> Decimal:
    return to_decimal(value).sqrt()


def dln(value: Fraction | Decimal | int) -> Decimal:
    return to_decimal(value).ln()


def dexp(value: Decimal) -> Decimal:
    return value.exp()


def dlog2(value: Fraction | Decimal | int) -> Decimal:
    return dln(value) / Decimal(2).ln()


def dpow(base: Decimal, exponent: Fraction | Decimal) -> Decimal:
    """非整数指数幂，base 必须非负"""
    if base == 0:
        return Decimal(0)
    return base ** to_decimal(exponent)


def floor_dyadic(value: Decimal, bits: int) -> Fraction:
    """向下取整到 2^-bits 网格上的有理数"""
    scaled = (value * (Decimal(2) ** bits)).to_integral_value(rounding=ROUND_FLOOR)
    return Fraction(int(scaled), 2**bits)


def ceil_dyadic(value: Decimal, bits: int) -> Fraction:
    """向上取整到 2^-bits 网格上的有理数"""
    scaled = (value * (Decimal(2) ** bits)).to_integral_value(rounding=ROUND_CEILING)
    return Fraction(int(scaled), 2**bits)


def leq_within(lhs: Decimal, rhs: Decimal, tol: Decimal) -> bool:
    """lhs ≤ rhs + tol"""
    return lhs <= rhs + tol


def compare_within(lhs: Decimal | int, rhs: Decimal | int, tol: Decimal) -> bool | None:
    """
    按有理数判定 lhs ≥ rhs，两侧都带有不超过 tol/2 的舍入误差

    Returns:
        差距至少为 tol 时给出 True/False，落在 (−tol, tol) 内时为 None
    """
    diff = Fraction(lhs) - Fraction(rhs)
    margin = Fraction(tol)
    if diff >= margin:
        return True
    if diff <= -margin:
        return False
    return None


def certified_leq(value: Fraction, bound: Decimal, tol: Decimal) -> bool:
    """精确值 value 不超过真值与 bound 相差 tol 以内的量"""
    return Fraction(value) <= Fraction(bound) - Fraction(tol)
