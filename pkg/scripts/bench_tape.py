"""Rough tape throughput check shaped like one training iteration.

Per location-day: 16 bounded rates (8-term affine -> sigmoid -> affine) and a
10-compartment step (~14 fused ops via products with rates), then a fused
loss accumulation. Run before trusting the training-iteration budget.
"""

import time

from covseir.autodiff import Tape, ParameterStore, backward, lincomb, sigmoid, square

N_LOC = 3
N_DAYS = 150
N_RATES = 16
N_W = 8


def one_iteration() -> float:
    store = ParameterStore()
    for r in range(N_RATES):
        for j in range(N_W):
            store.add(f"enc.{r}.w{j}", 0.01 * (j + 1))
        store.add(f"enc.{r}.bias", -2.0)
        for i in range(N_LOC):
            store.add(f"enc.{r}.b.{i}", 0.0)

    tape = Tape()
    bound = store.bind(tape)
    cov = [[0.1 * ((d + j) % 10) for j in range(N_W)] for d in range(N_DAYS)]

    loss_terms = []
    for i in range(N_LOC):
        state = [tape.parameter(100.0) for _ in range(10)]
        for d in range(N_DAYS):
            rates = []
            for r in range(N_RATES):
                z = lincomb(
                    [(cov[d][j], bound[f"enc.{r}.w{j}"]) for j in range(N_W)]
                    + [(1.0, bound[f"enc.{r}.bias"]), (1.0, bound[f"enc.{r}.b.{i}"])]
                )
                rates.append(sigmoid(z) * 0.1)
            # stand-in for the compartment step: products of rates and states
            prods = [rates[k] * state[k % 10] for k in range(14)]
            state = [
                lincomb([(1.0, state[k]), (1.0, prods[k]), (-1.0, prods[(k + 3) % 14])])
                for k in range(10)
            ]
            loss_terms.append(square(state[0] - 95.0))
    loss = lincomb([(0.1, t) for t in loss_terms])
    backward(loss)
    return len(tape)


if __name__ == "__main__":
    t0 = time.perf_counter()
    n = one_iteration()
    t1 = time.perf_counter()
    print(f"nodes per iteration: {n}")
    print(f"forward+backward: {t1 - t0:.3f} s")
    print(f"600 iterations -> {(t1 - t0) * 600 / 60:.1f} min")
