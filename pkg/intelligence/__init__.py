"""分析模块"""
from .hellinger import hellinger_distance, hellinger_series, verify_lemma1, verify_kappa_bound, continuity_bound
from .randomness import deficiency_trace, is_supermartingale, expected_to_individual
from .quasimeasures import to_quasimeasure, build_W, build_D, normalize_D, delta_k, delta_hat_k
from .counterexample import build_alpha, build_r, build_nu, contaminated_mixture, anti_dominance_sequence

__all__ = ['hellinger_distance', 'hellinger_series', 'verify_lemma1', 'verify_kappa_bound', 'continuity_bound', 'deficiency_trace', 'is_supermartingale', 'expected_to_individual', 'to_quasimeasure', 'build_W', 'build_D', 'normalize_D', 'delta_k', 'delta_hat_k', 'build_alpha', 'build_r', 'build_nu', 'contaminated_mixture', 'anti_dominance_sequence']
