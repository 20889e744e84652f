"""Compare the compiled string kernels with the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import random
import timeit

from kgqa import _kernels_py

try:
    from kgqa import _kernels
except ImportError:
    _kernels = None


def workload(seed=0):
    rng = random.Random(seed)
    alphabet = "abcdefghijklmnopqrstuvwxyz آبپتثجچ"
    word = lambda n: "".join(rng.choice(alphabet) for _ in range(n))  # noqa: E731
    labels = [word(rng.randint(4, 24)) for _ in range(2000)]
    abstracts = [word(rng.randint(200, 600)) for _ in range(200)]
    return word(12), labels, abstracts


def cases(mod, query, labels, abstracts):
    return {
        "levenshtein x2000": lambda: [mod.levenshtein(query, l) for l in labels],
        "similarity_many x2000": lambda: mod.similarity_many(query, labels),
        "trigram_counts x200": lambda: [mod.trigram_counts(a, 256) for a in abstracts],
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    query, labels, abstracts = workload()
    py = cases(_kernels_py, query, labels, abstracts)
    native = cases(_kernels, query, labels, abstracts) if _kernels else {}
    if not native:
        print("compiled extension not built; timing the Python kernels only")
    print(f"{'kernel':<24}{'python ms':>12}{'compiled ms':>14}{'speedup':>10}")
    for name, fn in py.items():
        t_py = min(timeit.repeat(fn, number=1, repeat=args.repeat)) * 1e3
        if name in native:
            assert native[name]() == fn(), name
            t_c = min(timeit.repeat(native[name], number=1, repeat=args.repeat)) * 1e3
            print(f"{name:<24}{t_py:>12.2f}{t_c:>14.2f}{t_py / t_c:>9.1f}x")
        else:
            print(f"{name:<24}{t_py:>12.2f}{'-':>14}{'-':>10}")


if __name__ == "__main__":
    main()
