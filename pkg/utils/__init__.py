"""工具模块"""
from .validators import parse_rational, validate_probability, validate_open_interval, validate_symbol_pattern, validate_positive_int
from .formatters import format_str, format_fraction, format_decimal, format_ratio, format_value, format_dict_pretty, format_duration

__all__ = ['parse_rational', 'validate_probability', 'validate_open_interval', 'validate_symbol_pattern', 'validate_positive_int', 'format_str', 'format_fraction', 'format_decimal', 'format_ratio', 'format_value', 'format_dict_pretty', 'format_duration']
