"""
工具验证模块
提供跨层使用的数据验证与解析函数
"""

import re
from fractions import Fraction
from typing import Any

_RATIONAL_PATTERN = re.compile(r"^\s*(-?\d+)\s*(?:/\s*(\d+))?\s*$")


def parse_rational(value: Any) -> Fraction | None:
    """
    解析 "n/d"、整数或 Fraction；浮点数一律拒绝以保证位精确

    Returns:
        Fraction | None: 解析失败时返回 None
    """
    if isinstance(value, bool):
        return None
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if not isinstance(value, str):
        return None
    match = _RATIONAL_PATTERN.match(value)
    if not match:
        return None
    numerator = int(match.group(1))
    denominator = int(match.group(2)) if match.group(2) else 1
    if denominator == 0:
        return None
    return Fraction(numerator, denominator)


def validate_probability(value: Any) -> Fraction | None:
    """验证 [0,1] 内的精确概率"""
    parsed = parse_rational(value)
    if parsed is None or not 0 <= parsed <= 1:
        return None
    return parsed


def validate_open_interval(value: Any, low: Fraction, high: Fraction) -> Fraction | None:
    """验证 low < value < high"""
    parsed = parse_rational(value)
    if parsed is None or not low < parsed < high:
        return None
    return parsed


def validate_symbol_pattern(pattern: Any, alphabet_size: int = 2) -> bool:
    """验证 "0110" 形式的非空符号串"""
    if not pattern or not isinstance(pattern, str):
        return False
    return all(ch.isdigit() and int(ch) < alphabet_size for ch in pattern)


def validate_positive_int(value: Any, minimum: int = 1) -> int | None:
    """验证整数下界"""
    if isinstance(value, bool) or not isinstance(value, int):
        return None
    return value if value >= minimum else None
