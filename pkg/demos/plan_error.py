"""How a cardinality error turns into a worse join order.

Builds a small four-table chain, computes the true cardinality of every
connected subquery, then feeds the planner estimates that are exact except
for one badly underestimated join.  The plan picked under the estimates is
costed under the truth and compared with the best plan.

    python3 demos/plan_error.py
"""

from __future__ import annotations

from cardmix.metrics import q_error
from cardmix.oracle import subquery_cards
from cardmix.plancost import CardinalitySet, optimal_plan, p_error, ppc
from cardmix.querygen import JoinPred, SpjQuery
from cardmix.relstore import ColumnSpec, GeneratorSpec, gen_database


def main() -> None:
    spec = GeneratorSpec.compact(4, [4000, 1500, 400, 60], "chain", [ColumnSpec(dist="uniform", lo=0, hi=99)], ColumnSpec(dist="zipf", s=1.3))
    db = gen_database(spec, seed=4)
    q = SpjQuery(frozenset(db.schema.table_names), frozenset(JoinPred.of(fk) for fk in db.schema.fks))
    base_rows = {t: len(db[t]) for t in db.schema.table_names}
    truth = {k: float(v) for k, v in subquery_cards(db, q).items()}
    C_T = CardinalitySet(truth, base_rows)

    # pretend the estimator thinks the two largest tables barely join
    worst = max((k for k in truth if len(k) == 2), key=truth.get)
    estimates = dict(truth)
    estimates[worst] = max(truth[worst] / 1000, 1.0)
    C_E = CardinalitySet(estimates, base_rows)

    print("subquery cardinalities:")
    for k, v in truth.items():
        mark = f"  (estimated {estimates[k]:.0f}, q-error {q_error(max(estimates[k], 1), max(v, 1)):.0f})" if k == worst else ""
        print(f"  {' '.join(k):20s} {v:10.0f}{mark}")
    best, chosen = optimal_plan(q, C_T), optimal_plan(q, C_E)
    print(f"\nplan under true cardinalities : {best}  cost {ppc(best, C_T):.0f}")
    print(f"plan under the estimates      : {chosen}  cost {ppc(chosen, C_T):.0f} (under the truth)")
    print(f"p-error: {p_error(q, C_E, C_T):.3f}")


if __name__ == "__main__":
    main()
