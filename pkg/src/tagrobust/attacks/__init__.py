"""Budget-constrained structure and text attacks."""
from .candidates import candidate_pairs, cosine_matrix, cosine_pairs, similarity_mask
from .dice import DiceConfig, attack_dice, visible_labels
from .grbcd import GrbcdConfig, attack_grbcd
from .perturbation import PerturbationSet, TextReplacement, apply_perturbation
from .pgd import PgdConfig, attack_pgd, attack_pgd_guard
from .projection import project_budget
from .rewriter import RewriterClient
from .sampling import inverse_degree_weights, sample_inverse_degree
from .text import attack_text_classswap

__all__ = [
    "DiceConfig", "GrbcdConfig", "PgdConfig", "PerturbationSet", "RewriterClient",
    "TextReplacement", "apply_perturbation", "attack_dice", "attack_grbcd", "attack_pgd",
    "attack_pgd_guard", "attack_text_classswap", "candidate_pairs", "cosine_matrix",
    "cosine_pairs", "inverse_degree_weights", "project_budget", "sample_inverse_degree",
    "similarity_mask", "visible_labels",
]
