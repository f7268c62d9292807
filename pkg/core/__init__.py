"""核心层模块"""
from .errors import LabError
from .config import LabConfig, LabConfigManager
from .models import CheckResult, ExperimentConfig, ExperimentResult, OutputRecord, RunManifest
from .measures import Alphabet, Semimeasure, conditional, joint, verify_semimeasure
from .registry import ModelRegistry, StagedSemimeasure, WeightRule, mixture

__all__ = ['LabError', 'LabConfig', 'LabConfigManager', 'CheckResult', 'ExperimentConfig', 'ExperimentResult', 'OutputRecord', 'RunManifest', 'Alphabet', 'Semimeasure', 'conditional', 'joint', 'verify_semimeasure', 'ModelRegistry', 'StagedSemimeasure', 'WeightRule', 'mixture']
