from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from helpers import LocalExecutor, case_from_texts, record_from_source  # noqa: E402

from casegen.execution import CaseOutcome, Status  # noqa: E402

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

TYPED_CONCAT_SRC = """\
def test_func(a: int, b: str) -> str:
    return str(a) + b
"""

# (as-written argument texts, expected canonical output)
PALINDROME_ROWS = [
    ({"s": '"abcba"', "center": "2"}, "(5, 0, 4)"),
    ({"s": '"abcdefg"', "center": "3"}, "(1, 3, 3)"),
    ({"s": '"aba"', "center": "1"}, "(3, 0, 2)"),
    ({"s": '"racecar"', "center": "3"}, "(7, 0, 6)"),
    ({"s": '"madam"', "center": "2"}, "(5, 0, 4)"),
    ({"s": '"abcabcabc"', "center": "4"}, "(1, 4, 4)"),
    ({"s": '"xyzyx"', "center": "2"}, "(5, 0, 4)"),
    ({"s": '"hello"', "center": "2"}, "(1, 2, 2)"),
    ({"s": '"ab"', "center": "0"}, "(1, 0, 0)"),
    ({"s": '"a"', "center": "0"}, "(1, 0, 0)"),
]

REVCOMP_ROWS = [
    ({"seq": '"ATCG"', "complementarity": "{'A': 'U', 'T': 'A', 'C': 'G', 'G': 'C'}"}, "'CGAU'"),
    ({"seq": '"ATCG"', "complementarity": "{'A': 'T', 'T': 'A', 'C': 'G', 'G': 'C'}"}, "'CGAT'"),
    ({"seq": '"ACGT"', "complementarity": "{'A': 'U', 'T': 'A', 'C': 'G', 'G': 'C'}"}, "'ACGU'"),
    ({"seq": '"ACGT"', "complementarity": "{'A': 'T', 'T': 'A', 'C': 'G', 'G': 'C'}"}, "'ACGT'"),
]


@pytest.fixture(scope="session")
def palindrome_record():
    return record_from_source(PALINDROME_SRC, "palindrome.py")


@pytest.fixture(scope="session")
def revcomp_record():
    return record_from_source(REVCOMP_SRC, "revcomp.py")


@pytest.fixture(scope="session")
def typed_concat_record():
    return record_from_source(TYPED_CONCAT_SRC, "typed_concat.py")


def paper_cases(record, rows):
    return [case_from_texts(record.fn_id, texts) for texts, _ in rows]


@pytest.fixture(scope="session")
def paper_stub_table(palindrome_record, revcomp_record):
    """Stub outcomes for the two worked-example functions."""
    table: dict[tuple[str, str], CaseOutcome] = {}
    for record, rows in ((palindrome_record, PALINDROME_ROWS), (revcomp_record, REVCOMP_ROWS)):
        for texts, expected in rows:
            case = case_from_texts(record.fn_id, texts)
            table[(record.fn_id, case.case_id)] = CaseOutcome(
                case=case, status=Status.OK, output_canonical=expected, duration_ms=1.0,
            )
    return table


@pytest.fixture
def local_executor():
    return LocalExecutor()
