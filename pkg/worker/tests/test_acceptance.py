"""Acceptance suite for the worker: fidelity, live filters, containment,
mutation falsification, and the desk-scale end-to-end run.

These tests integrate with the pipeline package through its published
surfaces: the executor wire protocol (exercised via the worker pool
client and raw subprocess pipes), the stage file schemas (records.jsonl,
cases.jsonl, casesets.jsonl), and the command-line entry point.
"""

from __future__ import annotations

import hashlib
import json
import subprocess
import sys
import time

import pytest

from sandbox_worker.canonical import canonical_text, parse_binding_surface

from casegen.execution import ExecRequest, Limits, Status, WorkerPoolExecutor
from casegen.inputgen import InputCase

PALINDROME_SRC = """\
def greatest_palindrome_size_odd(s, center):
    right = center + 1
    left = center - 1
    size = 1
    optimum_right = optimum_left = center
    while left >= 0 and right < len(s):
        if s[left] == s[right]:
            size += 2
            optimum_left = left
            optimum_right = right
            right += 1
            left -= 1
        else:
            break
    return size, optimum_left, optimum_right
"""

REVCOMP_SRC = """\
def reverse_complement(seq, complementarity):
    bases = list(seq)
    bases = [complementarity[base] for base in bases]
    reversed_complement = ''.join(bases)
    return reversed_complement[::-1]
"""

PALINDROME_ROWS = [
    ('dict(s="abcba", center=2)', "(5, 0, 4)"),
    ('dict(s="abcdefg", center=3)', "(1, 3, 3)"),
    ('dict(s="aba", center=1)', "(3, 0, 2)"),
    ('dict(s="racecar", center=3)', "(7, 0, 6)"),
    ('dict(s="madam", center=2)', "(5, 0, 4)"),
    ('dict(s="abcabcabc", center=4)', "(1, 4, 4)"),
    ('dict(s="xyzyx", center=2)', "(5, 0, 4)"),
    ('dict(s="hello", center=2)', "(1, 2, 2)"),
    ('dict(s="ab", center=0)', "(1, 0, 0)"),
    ('dict(s="a", center=0)', "(1, 0, 0)"),
]

REVCOMP_ROWS = [
    ("dict(seq=\"ATCG\", complementarity={'A': 'U', 'T': 'A', 'C': 'G', 'G': 'C'})", "'CGAU'"),
    ("dict(seq=\"ATCG\", complementarity={'A': 'T', 'T': 'A', 'C': 'G', 'G': 'C'})", "'CGAT'"),
    ("dict(seq=\"ACGT\", complementarity={'A': 'U', 'T': 'A', 'C': 'G', 'G': 'C'})", "'ACGU'"),
    ("dict(seq=\"ACGT\", complementarity={'A': 'T', 'T': 'A', 'C': 'G', 'G': 'C'})", "'ACGT'"),
]


def report(name: str) -> None:
    print(f"\nACCEPTANCE PASS: {name}")


def make_case(surface: str, idx: int = 0) -> InputCase:
    case_id = hashlib.sha256(f"{idx}:{surface}".encode()).hexdigest()[:16]
    return InputCase(case_id=case_id, bindings=parse_binding_surface(surface),
                     surface=surface, origin="LLM")


@pytest.fixture(scope="module")
def pool():
    executor = WorkerPoolExecutor(pool_size=2)
    yield executor
    executor.close()


def submit(pool, source: str, fn_name: str, surface: str, idx: int = 0,
           wall_ms: int = 2000):
    req = ExecRequest(
        fn_id=fn_name, source=source, fn_name=fn_name,
        case=make_case(surface, idx), limits=Limits(wall_time_ms=wall_ms),
    )
    return pool.submit(req)


def test_worker_fidelity_reproduces_worked_examples(pool):
    """Real execution matches every documented worked-example row exactly."""
    for i, (surface, expected) in enumerate(PALINDROME_ROWS):
        outcome = submit(pool, PALINDROME_SRC, "greatest_palindrome_size_odd", surface, i)
        assert outcome.status == Status.OK, (surface, outcome)
        assert outcome.output_canonical == expected, (surface, outcome.output_canonical)
    for i, (surface, expected) in enumerate(REVCOMP_ROWS):
        outcome = submit(pool, REVCOMP_SRC, "reverse_complement", surface, i)
        assert outcome.status == Status.OK
        assert outcome.output_canonical == expected, (surface, outcome.output_canonical)
    report("worker fidelity: 10/10 palindrome rows and 4/4 complement rows exact")


def test_typed_concat_one_shot_row(pool):
    src = "def test_func(a: int, b: str) -> str:\n    return str(a) + b\n"
    outcome = submit(pool, src, "test_func", "dict(a=1, b='a')")
    assert outcome.status == Status.OK
    assert outcome.output_canonical == "'1a'"  # str(1) + 'a' in a reference shell


FILTER_FUNCTIONS = {
    "always_zero": ("def always_zero(x):\n    return 0\n",
                    ["dict(x=1)", "dict(x=2)", "dict(x=3)"]),
    "explode": ("def explode(x):\n    raise ValueError('boom %d' % x)\n",
                ["dict(x=1)", "dict(x=2)"]),
    "wide": ("def wide(x):\n    return str(x) + 'a' * (10 ** 4)\n",
             ["dict(x=1)", "dict(x=2)"]),
    "jitter": ("def jitter(x):\n    import random\n    return random.random() + x\n",
               ["dict(x=1)", "dict(x=1000)"]),
    "halve": ("def halve(x):\n    return 10 // x\n",
              ["dict(x=0)", "dict(x=1)", "dict(x=2)", "dict(x=5)"]),
}


def run_cli(args: list[str], timeout: int = 120) -> subprocess.CompletedProcess:
    return subprocess.run(
        [sys.executable, "-m", "casegen.cli", *args],
        capture_output=True, text=True, timeout=timeout,
    )


def test_validity_filters_live(tmp_path):
    """Constant, all-error, overlong, and randomized functions are rejected
    by real execution; a valid function keeps its raising case."""
    out_dir = tmp_path / "out"
    out_dir.mkdir()
    records, cases = [], []
    for name, (source, surfaces) in FILTER_FUNCTIONS.items():
        records.append({
            "fn_id": name, "name": name, "source": source,
            "arg_names": ["x"], "arg_count": 1, "doc_id": "fixture",
        })
        cases.append({
            "fn_id": name,
            "cases": [make_case(s, i).to_json() for i, s in enumerate(surfaces)],
        })
    (out_dir / "records.jsonl").write_text(
        "\n".join(json.dumps(r) for r in records) + "\n")
    (out_dir / "cases.jsonl").write_text(
        "\n".join(json.dumps(c) for c in cases) + "\n")

    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "out_dir": str(out_dir),
        "jobs": 2,
        "module_allowlist": ["math", "random"],
    }))
    proc = run_cli(["execute", "--config", str(cfg)])
    assert proc.returncode == 0, proc.stderr

    verdicts = {}
    outcomes = {}
    for line in (out_dir / "casesets.jsonl").read_text().splitlines():
        obj = json.loads(line)
        verdicts[obj["fn_id"]] = obj["verdict"]
        outcomes[obj["fn_id"]] = obj["outcomes"]

    assert verdicts["always_zero"] == "CONSTANT_OUTPUT"
    assert verdicts["explode"] == "ALL_ERROR"
    assert verdicts["wide"] == "OVERLONG"
    assert verdicts["jitter"] == "NONDETERMINISTIC"
    assert verdicts["halve"] == "VALID"
    halve_status = [o["status"] for o in outcomes["halve"]]
    assert halve_status == ["EXCEPTION", "OK", "OK", "OK"]
    assert outcomes["halve"][0]["exception"]["type_name"] == "ZeroDivisionError"
    report("live validity filters: CONSTANT_OUTPUT / ALL_ERROR / OVERLONG / "
           "NONDETERMINISTIC; raising case retained in VALID set")


SPIN_SRC = """\
def maybe_spin(x):
    while x == 0:
        try:
            x -= 0
        except Exception:
            pass
    return x
"""


def test_containment_timeout_and_sockets(pool):
    """An infinite loop comes back TIMEOUT within limit + 500 ms and the
    next case still executes; socket use fails with no side effect."""
    wall_ms = 600
    t0 = time.monotonic()
    outcome = submit(pool, SPIN_SRC, "maybe_spin", "dict(x=0)", 0, wall_ms=wall_ms)
    elapsed_ms = (time.monotonic() - t0) * 1000
    assert outcome.status == Status.TIMEOUT
    assert elapsed_ms <= wall_ms + 500, f"timeout took {elapsed_ms:.0f}ms"

    follow = submit(pool, SPIN_SRC, "maybe_spin", "dict(x=7)", 1)
    assert follow.status == Status.OK and follow.output_canonical == "7"

    dial_src = (
        "def dial(host):\n"
        "    import socket\n"
        "    s = socket.socket()\n"
        "    s.connect((host, 80))\n"
        "    return 1\n"
    )
    outcome = submit(pool, dial_src, "dial", "dict(host='127.0.0.1')")
    assert outcome.status == Status.EXCEPTION
    # ImportError at the import statement: no socket object ever existed.
    assert outcome.exception["type_name"] == "ImportError"
    report(f"containment: TIMEOUT in {elapsed_ms:.0f}ms <= limit+500ms, "
           "next case ran, socket import refused")


CLAMP_SRC = """\
def clamp(value, lo, hi):
    if value < lo:
        return lo
    if value > hi:
        return hi
    return value
"""

INTERLEAVE_SRC = """\
def interleave(a, b):
    out = []
    i = 0
    while i < len(a) and i < len(b):
        out.append(a[i])
        out.append(b[i])
        i += 1
    return ''.join(out) + a[i:] + b[i:]
"""

CHECKSUM_SRC = """\
def checksum(xs, mod):
    total = 0
    for v in xs:
        total = (total * 31 + v) % mod
    return total
"""

MUTATION_SUITE = [
    {
        "fn_name": "greatest_palindrome_size_odd",
        "source": PALINDROME_SRC,
        "inputs": [s for s, _ in PALINDROME_ROWS[:6]],
        "mutants": [
            PALINDROME_SRC.replace("size = 1", "size = 2"),
            PALINDROME_SRC.replace("right = center + 1", "right = center - 1"),
            PALINDROME_SRC.replace("left >= 0", "left > 0"),
            PALINDROME_SRC.replace("s[left] == s[right]", "s[left] != s[right]"),
        ],
    },
    {
        "fn_name": "reverse_complement",
        "source": REVCOMP_SRC,
        "inputs": [s for s, _ in REVCOMP_ROWS],
        "mutants": [
            REVCOMP_SRC.replace("[::-1]", "[::1]"),
            REVCOMP_SRC.replace("''.join", "'-'.join"),
            REVCOMP_SRC.replace("''.join(bases)", "''.join(seq)"),
            REVCOMP_SRC.replace("list(seq)", "list(seq)[::-1]"),
        ],
    },
    {
        "fn_name": "clamp",
        "source": CLAMP_SRC,
        "inputs": ["dict(value=5, lo=0, hi=10)", "dict(value=-3, lo=0, hi=10)",
                   "dict(value=15, lo=0, hi=10)", "dict(value=0, lo=0, hi=10)",
                   "dict(value=10, lo=0, hi=10)", "dict(value=7, lo=7, hi=7)"],
        "mutants": [
            CLAMP_SRC.replace("value < lo", "value <= lo"),   # behavior-preserving
            CLAMP_SRC.replace("value > hi", "value >= hi"),   # behavior-preserving
            CLAMP_SRC.replace("return lo", "return hi", 1),
            CLAMP_SRC.replace("value < lo", "value > lo"),
        ],
    },
    {
        "fn_name": "interleave",
        "source": INTERLEAVE_SRC,
        "inputs": ['dict(a="abc", b="xyz")', 'dict(a="ab", b="wxyz")',
                   'dict(a="", b="z")', 'dict(a="hello", b="")'],
        "mutants": [
            INTERLEAVE_SRC.replace("i < len(a)", "i <= len(a)"),
            INTERLEAVE_SRC.replace("out.append(b[i])", "out.append(a[i])"),
            INTERLEAVE_SRC.replace("+ b[i:]", "+ b[:i]"),
            INTERLEAVE_SRC.replace("a[i:]", "a[i::]", 1),     # behavior-preserving
        ],
    },
    {
        "fn_name": "checksum",
        "source": CHECKSUM_SRC,
        "inputs": ["dict(xs=[1, 2, 3], mod=7)", "dict(xs=[0], mod=5)",
                   "dict(xs=[9, 9, 9, 9], mod=13)", "dict(xs=[], mod=3)",
                   "dict(xs=[5], mod=1)"],
        "mutants": [
            CHECKSUM_SRC.replace("31", "29"),
            CHECKSUM_SRC.replace("total = 0", "total = -0"),  # behavior-preserving
            CHECKSUM_SRC.replace("% mod", "// mod"),
            CHECKSUM_SRC.replace("+ v", "- v"),
        ],
    },
]


def oracle_signature(source: str, fn_name: str, surfaces: list[str]) -> list[tuple]:
    """Brute-force oracle: run trusted code in-process on every judge input."""
    ns: dict = {}
    exec(source, ns)  # noqa: S102 - fixtures written above
    fn = ns[fn_name]
    out = []
    for surface in surfaces:
        try:
            result = fn(**parse_binding_surface(surface))
            out.append(("ok", canonical_text(result)))
        except Exception as exc:
            out.append(("exc", type(exc).__name__))
    return out


def test_mutation_falsification(pool):
    """Every behavior-changing single-token mutant fails judging on at
    least one judge case; behavior-preserving mutants pass."""
    total_mutants = 0
    changing, preserving = 0, 0
    for spec in MUTATION_SUITE:
        fn_name, source, inputs = spec["fn_name"], spec["source"], spec["inputs"]
        truth_sig = oracle_signature(source, fn_name, inputs)
        truth_outcomes = [
            submit(pool, source, fn_name, surface, i) for i, surface in enumerate(inputs)
        ]
        assert all(o.status == Status.OK for o in truth_outcomes), fn_name

        for mutant in spec["mutants"]:
            assert mutant != source, "mutant did not apply"
            total_mutants += 1
            behavior_changed = oracle_signature(mutant, fn_name, inputs) != truth_sig

            matches = []
            for i, surface in enumerate(inputs):
                got = submit(pool, mutant, fn_name, surface, i)
                matches.append(
                    got.status == Status.OK
                    and got.output_canonical == truth_outcomes[i].output_canonical
                )
            judged_pass = all(matches)
            if behavior_changed:
                changing += 1
                assert not judged_pass, (fn_name, mutant)
            else:
                preserving += 1
                assert judged_pass, (fn_name, mutant)

    assert total_mutants == 20
    assert changing >= 15  # the suite plants a handful of preserving edits
    report(f"mutation falsification: {changing} behavior-changing mutants all "
           f"failed judging; {preserving} preserving mutants passed")


def test_eval_extras_second_pass(tmp_path):
    """`build --eval-extras` runs extra inputs through the real pool and
    merges the outcomes into EVAL holdout sets."""
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    (corpus / "mod.py").write_text("\n\n".join(synth_source(i) for i in range(8)))
    out_dir = tmp_path / "out"
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "corpus_roots": [str(corpus)],
        "out_dir": str(out_dir),
        "seed": 0,
        "jobs": 2,
        "holdout_count": 3,
        "eval_extra_inputs": 4,
        "m_fixed": 5,
    }))
    for stage in (["extract"], ["geninputs", "--fallback"], ["execute"]):
        proc = run_cli([stage[0], "--config", str(cfg), *stage[1:]])
        assert proc.returncode == 0, proc.stderr
    proc = run_cli(["build", "--config", str(cfg), "--eval-extras"])
    assert proc.returncode == 0, proc.stderr

    eval_lines = (out_dir / "eval.jsonl").read_text().splitlines()
    assert len(eval_lines) == 3
    for line in eval_lines:
        obj = json.loads(line)
        # 10 generated cases, m=5 observed: anything past 5 in holdout
        # came from the second pass.
        assert len(obj["holdout_cases"]) > 10 - obj["m"]
    train_lines = (out_dir / "train.jsonl").read_text().splitlines()
    for line in train_lines:
        obj = json.loads(line)
        assert len(obj["holdout_cases"]) == 10 - obj["m"]


def synth_source(i: int) -> str:
    a, b, variant = (i % 7) + 2, (i % 5) + 1, i % 4
    name = f"combine_{i:04d}"
    if variant == 0:
        body = f"    return x * {a} + y + {b}"
    elif variant == 1:
        body = f"    return (x + y) * {a} - {b}, x - y"
    elif variant == 2:
        body = f"    total = x * {a}\n    for _ in range({b}):\n        total += y\n    return total"
    else:
        body = f"    if x > y:\n        return x * {a} - y\n    return y * {b} + x + {a}"
    return f"def {name}(x, y):\n{body}\n"


@pytest.mark.slow
def test_desk_scale_end_to_end(tmp_path):
    """1000-function corpus through `run` with a real 4-worker pool in
    under 5 minutes, with a non-empty funnel at every stage."""
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    per_file = 20
    for start in range(0, 1000, per_file):
        chunk = [synth_source(i) for i in range(start, start + per_file)]
        (corpus / f"mod_{start:05d}.py").write_text("\n\n".join(chunk))

    out_dir = tmp_path / "out"
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "corpus_roots": [str(corpus)],
        "out_dir": str(out_dir),
        "seed": 0,
        "jobs": 4,
        "holdout_count": 50,
    }))

    t0 = time.monotonic()
    proc = run_cli(["run", "--config", str(cfg), "--fallback"], timeout=300)
    elapsed = time.monotonic() - t0
    assert proc.returncode == 0, proc.stderr[-2000:]
    assert elapsed < 300, f"run took {elapsed:.0f}s"

    funnel = {}
    for stage in ("extract", "geninputs", "execute", "build"):
        manifest = json.loads((out_dir / f"{stage}.manifest.json").read_text())
        funnel[stage] = manifest["counts"]
    assert funnel["extract"]["accepted"] == 1000
    assert funnel["geninputs"]["functions_with_cases"] == 1000
    assert funnel["execute"]["verdicts"].get("VALID", 0) > 0
    assert funnel["build"]["samples"] > 0
    assert funnel["build"]["eval"] == 50

    train = (out_dir / "train.jsonl").read_text().splitlines()
    eval_ = (out_dir / "eval.jsonl").read_text().splitlines()
    assert len(eval_) == 50 and len(train) == funnel["build"]["samples"] - 50

    # Ground-truth consistency: re-executing every EVAL target on its
    # recorded judge cases through the real pool scores a clean 1.0.
    completions = []
    for line in eval_:
        obj = json.loads(line)
        code = obj["target"].split("```python\n", 1)[1].rsplit("```", 1)[0]
        completions.append({"sample_id": obj["sample_id"],
                            "completion": f"```python\n{code}\n```"})
    comp_path = tmp_path / "completions.jsonl"
    comp_path.write_text("\n".join(json.dumps(c) for c in completions))
    proc = run_cli(["eval", "--config", str(cfg), "--completions", str(comp_path)],
                   timeout=180)
    assert proc.returncode == 0, proc.stderr[-2000:]
    eval_report = json.loads((out_dir / "report.json").read_text())
    assert eval_report["accuracy"] == 1.0, eval_report

    report(f"desk-scale run: 1000 functions end to end in {elapsed:.0f}s "
           f"({funnel['execute']['verdicts']}); ground-truth re-execution 1.0")
