from .grammar import (Grammar, GrammarError, Genotype, parse_bnf, decode,
                      random_genotype, load_grammar)
from .nsga2 import (EvolveError, Individual, NsgaConfig, crowding_distance,
                    dominates, nondominated_sort, nsga2_run, write_front_csv)
from .problems import (P1_PENALTY, P2_PENALTY, P2Context, PhenotypeP1,
                       PhenotypeP2, eps_threshold, fit_phenotype,
                       objectives_p1, objectives_p2, p1_grammar, p2_grammar,
                       parse_phenotype_p1, parse_phenotype_p2,
                       select_solution, solution_stats,
                       three_by_cluster_count, weighted_mean_cr)

__all__ = [
    "Grammar", "GrammarError", "Genotype", "parse_bnf", "decode",
    "random_genotype", "load_grammar",
    "EvolveError", "Individual", "NsgaConfig", "crowding_distance",
    "dominates", "nondominated_sort", "nsga2_run", "write_front_csv",
    "P1_PENALTY", "P2_PENALTY", "P2Context", "PhenotypeP1", "PhenotypeP2",
    "eps_threshold", "fit_phenotype", "objectives_p1", "objectives_p2",
    "p1_grammar", "p2_grammar", "parse_phenotype_p1", "parse_phenotype_p2",
    "select_solution", "solution_stats", "three_by_cluster_count",
    "weighted_mean_cr",
]
