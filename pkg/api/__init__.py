"""API模块"""
from .experiments import EXPERIMENTS, ExperimentMonitor, run_experiment
from .verification import VerificationReport, VerificationSuite, run_verification

__all__ = ['EXPERIMENTS', 'ExperimentMonitor', 'run_experiment', 'VerificationReport', 'VerificationSuite', 'run_verification']
