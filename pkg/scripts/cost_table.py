"""Closed-form costs for all four structures plus the LSM simulator check.

    python3 scripts/cost_table.py
"""
from nbtree.costmodel import STRUCTURES, lsm_costs, lsm_simulate, predict


def main():
    print("structure  n        amort_alpha  amort_beta  worst_alpha  query_alpha")
    for n in (2**20, 2**24, 2**28):
        for s in STRUCTURES:
            c = predict(s, n, 256, 4, 2**10)
            print(f"{s:9} 2^{n.bit_length() - 1:<6} {c.amortized_insert.alpha_seq:11.4f} "
                  f"{c.amortized_insert.beta_seek:11.4f} {c.worst_insert.alpha_seq:12.2f} {c.worst_query:11.2f}")
    print("\nlsm simulator vs formula (B=4)")
    for f in (2, 4):
        for c1 in (4, 64):
            for n in (2**10, 2**14):
                sim = lsm_simulate(n, f, c1, 4)["total_pages"]
                pred = n * lsm_costs(n, 4, f, c1).amortized_insert.alpha_seq
                print(f"f={f} C1={c1:<3} n={n:<6} sim={sim:<7} formula={pred:<8.0f} ratio={sim / pred:.2f}")


if __name__ == "__main__":
    main()
