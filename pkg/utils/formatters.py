"""
工具格式化模块
提供跨层使用的数据格式化函数，输出必须逐字节可复现
"""

import json
from decimal import Decimal, localcontext
from fractions import Fraction
from typing import Any

# 实数输出保留的有效数字
REAL_DIGITS = 30


def format_str(x: tuple[int, ...]) -> str:
    """符号串转可读形式，空串写作 ε"""
    if not x:
        return "ε"
    return "".join(str(a) for a in x)


def format_fraction(value: Fraction | int) -> str:
    """有理数写成 n/d"""
    value = Fraction(value)
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


def format_decimal(value: Decimal, digits: int = REAL_DIGITS) -> str:
    """固定有效数字的科学计数法，避免依赖上下文精度"""
    if value == 0:
        return "0"
    return f"{value:.{digits - 1}E}"


def format_ratio(value: Fraction, digits: int = REAL_DIGITS) -> str:
    """大分母有理数按固定有效数字输出"""
    value = Fraction(value)
    if value == 0:
        return "0"
    with localcontext() as ctx:
        ctx.prec = digits + 5
        return format_decimal(Decimal(value.numerator) / Decimal(value.denominator), digits)


def format_value(value: Any) -> Any:
    """把 Fraction/Decimal 递归转换为 JSON 友好的确定性表示"""
    if isinstance(value, bool) or value is None:
        return value
    if isinstance(value, Fraction):
        return format_fraction(value)
    if isinstance(value, Decimal):
        return format_decimal(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple) and all(isinstance(v, int) for v in value):
        return format_str(value)
    if isinstance(value, dict):
        return {str(k): format_value(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [format_value(v) for v in value]
    return value


def format_dict_pretty(data: dict[str, Any], indent: int = 2) -> str:
    """美化格式化字典，键排序保证输出稳定"""
    try:
        return json.dumps(format_value(data), ensure_ascii=False, indent=indent, sort_keys=True)
    except (ValueError, TypeError):
        return str(data)


def format_duration(seconds: float) -> str:
    """格式化时长"""
    if seconds < 1:
        return f"{seconds * 1000:.0f}ms"
    elif seconds < 60:
        return f"{seconds:.1f}s"
    elif seconds < 3600:
        minutes = seconds / 60
        return f"{minutes:.1f}m"
    else:
        hours = seconds / 3600
        return f"{hours:.1f}h"
