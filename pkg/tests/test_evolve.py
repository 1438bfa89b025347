"""Grammar mapping, the multi-objective engine, and the two search problems."""

from collections import Counter

import numpy as np
import pytest

from atcs.clustering import CS_GRID, K_MAX, K_MIN, davies_bouldin, kmeans_fit
from atcs.evolve.grammar import (Genotype, Grammar, GrammarError, decode,
                                 load_grammar, parse_bnf, random_genotype)
from atcs.evolve.nsga2 import (EvolveError, Individual, NsgaConfig,
                               crowding_distance, dominates, nondominated_sort,
                               nsga2_run, write_front_csv)
from atcs.evolve.problems import (P2Context, eps_threshold, fit_phenotype,
                                  objectives_p1, objectives_p2, p1_grammar,
                                  p2_grammar, parse_phenotype_p1,
                                  parse_phenotype_p2, select_solution,
                                  solution_stats, three_by_cluster_count,
                                  weighted_mean_cr)
from atcs.seeds import subseed

TOY = """
# a comment line
<s> ::= <a> <b>
<a> ::= x | y
<b> ::= u | v | w
"""


def test_parse_bnf_structure():
    g = parse_bnf(TOY)
    assert g.start == "<s>"
    assert g.nonterminals == {"<s>", "<a>", "<b>"}
    assert g.terminals == {"x", "y", "u", "v", "w"}
    assert g.alternatives("<b>") == (("u",), ("v",), ("w",))


@pytest.mark.parametrize("text", [
    "no rule arrow here",
    "s ::= x",                      # lhs not <name>
    "<s> ::= x\n<s> ::= y",         # duplicate rule
    "<s> ::= x | | y",              # empty alternative
    "<s> ::= <ghost>",              # undefined reference
    "# only comments\n\n",
])
def test_parse_bnf_rejects(text):
    with pytest.raises(GrammarError):
        parse_bnf(text)


def test_genotype_validation():
    with pytest.raises(GrammarError):
        Genotype(())
    with pytest.raises(GrammarError):
        Genotype((0, 256))
    with pytest.raises(GrammarError):
        Genotype((0, -1))
    with pytest.raises(GrammarError):
        Genotype((0,), wrap_limit=0)
    assert len(Genotype((np.int64(3), 5))) == 2


def test_decode_codon_choices():
    g = parse_bnf(TOY)
    # one codon per multi-alternative nonterminal, modular choice
    assert decode(Genotype((0, 0)), g) == "xu"
    assert decode(Genotype((1, 2)), g) == "yw"
    assert decode(Genotype((3, 5)), g) == "yw"          # 3 % 2, 5 % 3
    assert decode(Genotype((2, 4)), g) == "xv"


def test_decode_single_alternative_consumes_no_codon():
    g = parse_bnf("<s> ::= ( <a> )\n<a> ::= p | q\n")
    assert decode(Genotype((1,)), g) == "(q)"


def test_decode_wrap_and_exhaustion():
    g = parse_bnf("<s> ::= <d> <d> <d>\n<d> ::= 0 | 1\n")
    # a single codon re-read under the wrap limit
    assert decode(Genotype((1,), wrap_limit=3), g) == "111"
    g4 = parse_bnf("<s> ::= <d> <d> <d> <d>\n<d> ::= 0 | 1\n")
    assert decode(Genotype((1,), wrap_limit=3), g4) is None


def test_decode_runaway_recursion_is_invalid():
    g = parse_bnf("<s> ::= <s> <s> | x\n")
    assert decode(Genotype((0,) * 8), g) is None


def test_random_genotype(rng):
    g = random_genotype(rng, length=32, wrap_limit=2)
    assert len(g) == 32 and g.wrap_limit == 2
    assert all(0 <= c <= 255 for c in g.codons)


def test_dominates():
    assert dominates((1.0, 2.0), (1.0, 3.0))
    assert dominates((0.0, 0.0), (1.0, 1.0))
    assert not dominates((1.0, 2.0), (1.0, 2.0))
    assert not dominates((0.0, 3.0), (1.0, 2.0))
    with pytest.raises(EvolveError):
        dominates((1.0,), (1.0, 2.0))


def fronts_oracle(objs):
    """Peel nondominated sets by the quadratic definition."""
    remaining = set(range(len(objs)))
    out = []
    while remaining:
        f = sorted(i for i in remaining
                   if not any(dominates(objs[j], objs[i])
                              for j in remaining if j != i))
        out.append(f)
        remaining -= set(f)
    return out


def test_nondominated_sort_matches_oracle(rng):
    for n_obj in (2, 3):
        objs = rng.integers(0, 6, size=(120, n_obj)).astype(float)
        objs[10] = objs[3]          # exact duplicates never dominate each other
        assert nondominated_sort(objs.tolist()) == fronts_oracle(objs.tolist())
    assert nondominated_sort([]) == []


def test_crowding_distance_values():
    d = crowding_distance([[0.0], [1.0], [2.0], [4.0]])
    assert d[0] == np.inf and d[3] == np.inf
    assert d[1] == pytest.approx(0.5)
    assert d[2] == pytest.approx(0.75)
    # anti-correlated pair of objectives, evenly spread
    d2 = crowding_distance([[0, 3], [1, 2], [2, 1], [3, 0]])
    assert d2[0] == np.inf and d2[3] == np.inf
    assert d2[1] == pytest.approx(4 / 3)
    assert d2[2] == pytest.approx(4 / 3)
    assert np.all(crowding_distance([[1, 2], [3, 4]]) == np.inf)
    # a constant objective contributes nothing, boundaries stay infinite
    d3 = crowding_distance([[0, 5], [1, 5], [2, 5]])
    assert d3[1] == pytest.approx(1.0)


def test_nsga_config_validation():
    ok = dict(pop_size=4, generations=1, penalty=(1.0,))
    NsgaConfig(**ok)
    for bad in (dict(ok, pop_size=3), dict(ok, pop_size=0),
                dict(ok, generations=-1), dict(ok, crossover_rate=1.5),
                dict(ok, mutation_rate=-0.1), dict(ok, genotype_length=1)):
        with pytest.raises(EvolveError):
            NsgaConfig(**bad)


def _toy_objectives(ph):
    parsed = parse_phenotype_p2(ph, k=2)
    a, b = parsed.crs
    return ((a + b) / 200.0, abs(a - b) / 100.0)


def test_nsga2_run_behavior():
    cfg = NsgaConfig(pop_size=24, generations=30, penalty=(1.0, 1.0), seed=2)
    g = p2_grammar(2)
    history = []
    front = nsga2_run(
        g, _toy_objectives, cfg,
        on_generation=lambda gen, pop: history.append(
            (gen, [(i.phenotype, i.objectives, i.rank) for i in pop])))
    assert [gen for gen, _ in history] == list(range(31))
    # the returned front is the deduplicated rank-0 slice of the last
    # population
    rank0 = [(ph, obj) for ph, obj, r in history[-1][1] if r == 0]
    assert [(i.phenotype, i.objectives) for i in front] == \
        list(dict.fromkeys(rank0))
    for a in front:
        for b in front:
            assert not dominates(a.objectives, b.objectives)
    # selection pressure moved the front toward the origin
    best0 = min(sum(obj) for _, obj, _ in history[0][1])
    assert min(sum(i.objectives) for i in front) < best0
    again = nsga2_run(g, _toy_objectives, cfg)
    assert [(i.phenotype, i.objectives) for i in again] == \
        [(i.phenotype, i.objectives) for i in front]


def test_nsga2_evaluates_each_phenotype_once():
    calls = Counter()

    def evaluate(ph):
        calls[ph] += 1
        return _toy_objectives(ph)

    nsga2_run(p2_grammar(2), evaluate,
              NsgaConfig(pop_size=10, generations=5, penalty=(1.0, 1.0),
                         seed=2))
    assert calls and max(calls.values()) == 1


def test_write_front_csv(tmp_path):
    front = [Individual(None, "[0,0]", (0.25, 0.5), rank=0),
             Individual(None, "[4,8]", (0.125, 1.0), rank=0),
             Individual(None, "[96,96]", (0.9, 0.9), rank=1)]
    path = tmp_path / "front.csv"
    write_front_csv(path, front)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "objective_1,objective_2,phenotype"
    assert lines[1] == '0.25,0.5,"[0,0]"'
    assert len(lines) == 3              # rank-1 member filtered out


def test_parse_phenotype_p1_round_trip():
    mask = ["TRUE"] + ["FALSE"] * 29
    ph = "[5," + ",".join(mask) + "]"
    parsed = parse_phenotype_p1(ph)
    assert parsed.k == 5
    assert parsed.mask[0] is True and sum(parsed.mask) == 1
    assert parsed.selection().indices == (0,)


@pytest.mark.parametrize("ph", [
    "5," + ",".join(["TRUE"] * 30),                  # no brackets
    "[x," + ",".join(["TRUE"] * 30) + "]",           # bad k
    "[1," + ",".join(["TRUE"] * 30) + "]",           # k below range
    f"[{K_MAX + 1}," + ",".join(["TRUE"] * 30) + "]",
    "[5," + ",".join(["TRUE"] * 29) + "]",           # short mask
    "[5," + ",".join(["True"] * 30) + "]",           # wrong case
])
def test_parse_phenotype_p1_rejects(ph):
    assert parse_phenotype_p1(ph) is None


def test_parse_phenotype_p1_empty_mask_has_no_selection():
    ph = "[3," + ",".join(["FALSE"] * 30) + "]"
    assert parse_phenotype_p1(ph).selection() is None


def test_parse_phenotype_p2():
    assert parse_phenotype_p2("[0,48,96]").crs == (0, 48, 96)
    assert parse_phenotype_p2("[0,48]", k=3) is None
    assert parse_phenotype_p2("[0,47,96]") is None   # off grid
    assert parse_phenotype_p2("[0,x]") is None
    assert parse_phenotype_p2("0,48") is None


def test_p1_grammar_only_yields_parseable_phenotypes(rng):
    g = p1_grammar()
    seen = 0
    for _ in range(50):
        ph = decode(random_genotype(rng, 64), g)
        if ph is None:
            continue
        seen += 1
        parsed = parse_phenotype_p1(ph)
        assert parsed is not None
        assert K_MIN <= parsed.k <= K_MAX
    assert seen > 10


def test_p2_grammar_shape_and_bounds(rng):
    g = p2_grammar(4)
    ph = decode(random_genotype(rng, 64), g)
    assert parse_phenotype_p2(ph, k=4) is not None
    with pytest.raises(EvolveError):
        p2_grammar(K_MIN - 1)
    with pytest.raises(EvolveError):
        p2_grammar(K_MAX + 1)


def test_objectives_p1_matches_direct_fit(rng):
    X = rng.standard_normal((60, 30))
    mask = ["FALSE"] * 30
    for i in (0, 7, 19):
        mask[i] = "TRUE"
    ph = "[3," + ",".join(mask) + "]"
    n_sel, db, inv_k = objectives_p1(ph, X, seed=123)
    assert (n_sel, inv_k) == (3.0, 1.0 / 3.0)
    mask_key = "".join("1" if b == "TRUE" else "0" for b in mask)
    direct = kmeans_fit(X[:, (0, 7, 19)], 3,
                        seed=subseed(123, "kmeans", 3, mask_key))
    assert db == pytest.approx(davies_bouldin(direct, X[:, (0, 7, 19)]),
                               abs=1e-12)
    model = fit_phenotype(ph, X, seed=123)
    assert np.allclose(model.centroids, direct.centroids)
    assert tuple(model.feature_selection.indices) == (0, 7, 19)


def test_objectives_p1_penalizes_invalid(rng):
    X = rng.standard_normal((40, 30))
    penalty = objectives_p1("garbage", X, seed=1)
    assert penalty == (31.0, 10.0, 1.0)
    all_false = "[3," + ",".join(["FALSE"] * 30) + "]"
    assert objectives_p1(all_false, X, seed=1) == penalty
    with pytest.raises(EvolveError):
        fit_phenotype("garbage", X, seed=1)


def test_p2_context_validation():
    ok = dict(labels=np.array([0, 1, 0]), counts=np.array([2, 1]),
              correct=np.full((3, len(CS_GRID)), 0.5))
    P2Context(**ok)
    with pytest.raises(EvolveError):
        P2Context(**dict(ok, correct=np.full((3, 4), 0.5)))
    with pytest.raises(EvolveError):
        P2Context(**dict(ok, correct=np.full((3, len(CS_GRID)), 1.5)))
    with pytest.raises(EvolveError):
        P2Context(**dict(ok, labels=np.array([0, 2, 0])))
    with pytest.raises(EvolveError):
        P2Context(**dict(ok, counts=np.array([0, 0])))


def test_weighted_mean_cr():
    assert weighted_mean_cr([3, 1], [40, 80]) == pytest.approx(50.0)
    with pytest.raises(EvolveError):
        weighted_mean_cr([1, 2], [40])
    with pytest.raises(EvolveError):
        weighted_mean_cr([0, 0], [40, 80])


def test_objectives_p2_hand_case():
    # two clusters; cluster 0 rows always classify, cluster 1 rows survive
    # only at grid column 0
    correct = np.zeros((4, len(CS_GRID)))
    correct[:2, :] = 1.0
    correct[2:, 0] = 1.0
    ctx = P2Context(labels=np.array([0, 0, 1, 1]),
                    counts=np.array([2, 2]), correct=correct)
    o1, o2 = objectives_p2("[80,0]", ctx)
    assert o1 == pytest.approx(1.0 - 0.40)      # mean cr (80+0)/2 = 40
    assert o2 == pytest.approx(0.0)
    o1b, o2b = objectives_p2("[80,4]", ctx)
    assert o2b == pytest.approx(0.5)            # cluster 1 rows all fail
    assert objectives_p2("[80]", ctx) == (1.0, 1.0)


def test_eps_threshold_and_solution_stats():
    assert eps_threshold(95.0) == pytest.approx(10.0)
    ind = Individual(None, "[40,80]", (1.0 - 0.6, 0.07))
    assert solution_stats(ind) == (pytest.approx(60.0), pytest.approx(7.0))


def _p2_ind(cr_bar, err):
    return Individual(None, f"[{cr_bar}]", (1.0 - cr_bar / 100.0, err / 100.0))


def test_select_solution_ranking():
    front = [_p2_ind(40, 2.0), _p2_ind(80, 9.0), _p2_ind(72, 1.0),
             _p2_ind(96, 30.0)]
    chosen = select_solution(front, baseline_accuracy=95.0)   # budget 10%
    assert solution_stats(chosen)[0] == pytest.approx(80.0)
    with pytest.raises(EvolveError):
        select_solution([], 95.0)
    with pytest.raises(EvolveError):
        select_solution([_p2_ind(96, 30.0)], 95.0)


def test_select_solution_accept_predicate():
    front = [_p2_ind(40, 2.0), _p2_ind(80, 9.0), _p2_ind(72, 1.0)]
    tried = []

    def accept(ind):
        tried.append(solution_stats(ind)[0])
        return solution_stats(ind)[0] <= 50.0

    chosen = select_solution(front, 95.0, accept=accept)
    assert solution_stats(chosen)[0] == pytest.approx(40.0)
    assert tried == [80.0, 72.0, 40.0]          # walked best-first
    with pytest.raises(EvolveError):
        select_solution(front, 95.0, accept=lambda ind: False)


def _p1_ind(k):
    mask = ["TRUE"] * 30
    return Individual(None, f"[{k}," + ",".join(mask) + "]", (30.0, 1.0, 1.0 / k))


def test_three_by_cluster_count():
    front = [_p1_ind(k) for k in (9, 2, 17, 5, 25)]
    picks = three_by_cluster_count(front)
    assert [parse_phenotype_p1(p.phenotype).k for p in picks] == [2, 9, 25]
    assert [parse_phenotype_p1(p.phenotype).k
            for p in three_by_cluster_count([_p1_ind(7)])] == [7]
    with pytest.raises(EvolveError):
        three_by_cluster_count([Individual(None, None, (1.0, 1.0, 1.0))])


def test_load_grammar_missing():
    with pytest.raises(FileNotFoundError):
        load_grammar("does-not-exist")
