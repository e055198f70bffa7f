#!/usr/bin/env python3
"""Master test runner for jointseg.

Executes tests in the proper order following the test pyramid:
1. Unit Tests - autodiff, entropy coding, networks, metrics, config, training
2. Contract Tests - container, mask, frame and checkpoint byte layouts
3. Integration Tests - split pipeline, decoder service and the command line

Run from the tests directory: `python run_all_tests.py`.
"""

import sys
from typing import Callable, Dict, List, Tuple

# Import test modules
from test_contract_wire import run_contract_tests
from test_integration_cli import run_cli_tests
from test_integration_pipeline import run_integration_tests
from test_unit_coding import run_coding_tests
from test_unit_config import run_config_tests
from test_unit_metrics import run_metrics_tests
from test_unit_networks import run_networks_tests
from test_unit_tensor import run_tensor_tests
from test_unit_training import run_training_tests

Phase = Tuple[str, str, List[Callable[[], None]]]

PHASES: List[Phase] = [
    (
        "unit",
        "UNIT TESTS",
        [
            run_tensor_tests,
            run_coding_tests,
            run_networks_tests,
            run_metrics_tests,
            run_config_tests,
            run_training_tests,
        ],
    ),
    ("contract", "CONTRACT TESTS", [run_contract_tests]),
    ("integration", "INTEGRATION TESTS", [run_integration_tests, run_cli_tests]),
]


def run_test_suite() -> Tuple[bool, Dict[str, bool]]:
    """Run complete test suite in proper order; stops at the first failing phase."""
    results = {key: False for key, _, _ in PHASES}

    print("\n" + "=" * 70)
    print("jointseg Test Suite")
    print("=" * 70)
    print("\nTest Execution Order: Unit → Contract → Integration")
    print("=" * 70 + "\n")

    for number, (key, title, runners) in enumerate(PHASES, start=1):
        print(f"\nPHASE {number}: {title}")
        print("-" * 70)
        try:
            for runner in runners:
                runner()
                print()
        except SystemExit:
            print(f"\n✗ {title.capitalize()} FAILED - stopping test execution\n")
            return False, results
        results[key] = True
        print(f"✓ {title.capitalize()} PASSED\n")

    return True, results


def print_summary(success: bool, results: Dict[str, bool]) -> None:
    """Print test execution summary."""
    print("\n" + "=" * 70)
    print("TEST SUITE SUMMARY")
    print("=" * 70)

    for key, title, _ in PHASES:
        status_icon = "✓" if results[key] else "✗"
        status = "PASSED" if results[key] else "FAILED"
        print(f"{status_icon} {title.capitalize() + ':':<20} {status}")

    print("=" * 70)

    if success:
        print("✓ ALL TESTS PASSED")
    else:
        print("✗ SOME TESTS FAILED")
        print("\nPlease fix failing tests before proceeding.")

    print("=" * 70 + "\n")


def main() -> None:
    """Main entry point for test runner."""
    success, results = run_test_suite()
    print_summary(success, results)

    sys.exit(0 if success else 1)


if __name__ == "__main__":
    main()
