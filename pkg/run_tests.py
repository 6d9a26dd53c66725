#!/usr/bin/env python3
"""
Test runner for sqpe-estimators.
Runs every suite through pytest and writes TEST_RESULTS.json and TEST_REPORT.md.
"""

import json
import subprocess
import sys
import time
from datetime import datetime
from pathlib import Path

# Add project root to path
project_root = Path(__file__).parent.absolute()
sys.path.insert(0, str(project_root))

TEST_SUITES = [
    ("tests/test_operators.py", "Operators"),
    ("tests/test_shot_sim.py", "Shot Simulation"),
    ("tests/test_oa.py", "Operator Averaging"),
    ("tests/test_sqpe.py", "Phase-Estimation Estimators"),
    ("tests/test_conditions.py", "Advantage Conditions"),
    ("tests/test_noise.py", "Readout Noise and Channels"),
    ("tests/test_trotter.py", "Product Formulas"),
    ("tests/test_deuteron.py", "Deuteron Benchmark"),
    ("tests/test_server.py", "MCP Server"),
    ("tests/test_experiments.py", "Experiments and CLI"),
]


def run_test_suite(test_file, name):
    """Run a specific test suite and return results"""
    print(f"\n{'='*60}")
    print(f"Running {name}")
    print('='*60)

    start_time = time.time()
    try:
        result = subprocess.run([
            sys.executable, "-m", "pytest",
            str(test_file),
            "-v", "--tb=short",
        ], capture_output=True, text=True, cwd=project_root)
    except Exception as e:
        print(f"Error running {name}: {e}")
        return {"name": name, "status": "ERROR", "duration": 0, "passed": 0, "failed": 0,
                "skipped": 0, "errors": 1, "output": str(e), "return_code": -1}

    duration = time.time() - start_time
    output = result.stdout + result.stderr
    test_result = {
        "name": name,
        "status": "PASSED" if result.returncode == 0 else "FAILED",
        "duration": round(duration, 2),
        "passed": output.count(" PASSED"),
        "failed": output.count(" FAILED"),
        "skipped": output.count(" SKIPPED"),
        "errors": output.count(" ERROR"),
        "output": output,
        "return_code": result.returncode,
    }

    print(f"\n{name} Results:")
    print(f"  Status: {test_result['status']}")
    print(f"  Duration: {duration:.2f}s")
    print(f"  Passed: {test_result['passed']}")
    print(f"  Failed: {test_result['failed']}")
    if test_result["failed"] or test_result["errors"]:
        print("\nFailure/Error Details:")
        print(output[-1000:])
    return test_result


def check_dependencies():
    """Check if required dependencies are available"""
    print("Checking dependencies...")
    dependencies = {
        "pytest": "pytest",
        "pytest_asyncio": "pytest-asyncio",
        "numpy": "numpy",
        "scipy": "scipy",
        "pydantic": "pydantic",
        "dotenv": "python-dotenv",
        "psutil": "psutil",
        "mcp": "MCP server library",
    }
    available = {}
    for dep, description in dependencies.items():
        try:
            __import__(dep)
            available[dep] = True
            print(f"  ✓ {description}")
        except ImportError:
            available[dep] = False
            print(f"  ✗ {description} (not available)")
    return available


def run_all_tests():
    """Run all test suites and generate the reports"""
    print("🧪 sqpe-estimators - Test Suite")
    print(f"Started at: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}")

    dependencies = check_dependencies()
    results = []
    overall_start = time.time()
    for test_file, name in TEST_SUITES:
        test_path = project_root / test_file
        if test_path.exists():
            results.append(run_test_suite(test_path, name))
        else:
            print(f"⚠️  Test file not found: {test_file}")
            results.append({"name": name, "status": "SKIPPED", "duration": 0, "passed": 0, "failed": 0,
                            "skipped": 1, "errors": 0, "output": "Test file not found", "return_code": 0})

    generate_test_report(results, dependencies, time.time() - overall_start)
    return results


def generate_test_report(results, dependencies, overall_duration):
    """Print the summary and save JSON and markdown reports"""
    total_passed = sum(r["passed"] for r in results)
    total_failed = sum(r["failed"] for r in results)
    total_skipped = sum(r["skipped"] for r in results)
    total_errors = sum(r["errors"] for r in results)
    overall_status = "PASSED" if total_failed == 0 and total_errors == 0 else "FAILED"

    print(f"\n{'='*80}")
    print("TEST REPORT")
    print('='*80)
    print(f"\nOverall Status: {overall_status}")
    print(f"Total Duration: {overall_duration:.2f}s")
    print(f"  ✓ Passed: {total_passed}")
    print(f"  ✗ Failed: {total_failed}")
    print(f"  ⚠ Skipped: {total_skipped}")
    print(f"  💥 Errors: {total_errors}")

    print("\nTest Suite Breakdown:")
    print("-" * 60)
    for result in results:
        status_icon = "✓" if result["status"] == "PASSED" else "✗" if result["status"] == "FAILED" else "⚠"
        print(f"{status_icon} {result['name']:<30} {result['status']:<8} ({result['duration']:.1f}s)")

    missing = [dep for dep, ok in dependencies.items() if not ok]
    if missing:
        print(f"\n• Missing packages: {', '.join(missing)}; install with `pip install -r requirements.txt`")

    report = {
        "timestamp": datetime.now().isoformat(),
        "overall_status": overall_status,
        "overall_duration": round(overall_duration, 2),
        "summary": {
            "total_passed": total_passed,
            "total_failed": total_failed,
            "total_skipped": total_skipped,
            "total_errors": total_errors,
        },
        "dependencies": dependencies,
        "test_results": results,
    }
    try:
        with open(project_root / "TEST_RESULTS.json", "w") as f:
            json.dump(report, f, indent=2)
        print(f"\n📄 Detailed report saved to: {project_root / 'TEST_RESULTS.json'}")
    except OSError as e:
        print(f"⚠️  Could not save report: {e}")
    create_markdown_report(report)


def create_markdown_report(report_data):
    """Create markdown test report"""
    lines = [
        "# Test Results Report",
        "",
        f"**Generated:** {report_data['timestamp']}",
        f"**Overall Status:** {report_data['overall_status']}",
        f"**Duration:** {report_data['overall_duration']}s",
        "",
        "| Test Suite | Status | Duration | P/F/S/E |",
        "|------------|--------|----------|---------|",
    ]
    for result in report_data["test_results"]:
        pfse = f"{result['passed']}/{result['failed']}/{result['skipped']}/{result['errors']}"
        lines.append(f"| {result['name']} | {result['status']} | {result['duration']}s | {pfse} |")
    lines.append("")
    lines.append(f"Python {sys.version.split()[0]}")
    try:
        (project_root / "TEST_REPORT.md").write_text("\n".join(lines) + "\n")
        print(f"📄 Markdown report saved to: {project_root / 'TEST_REPORT.md'}")
    except OSError as e:
        print(f"⚠️  Could not save markdown report: {e}")


if __name__ == "__main__":
    results = run_all_tests()
    failed_suites = [r for r in results if r["status"] in ("FAILED", "ERROR")]
    if failed_suites:
        print(f"\n❌ {len(failed_suites)} test suite(s) failed")
        sys.exit(1)
    print("\n✅ All test suites passed successfully!")
    sys.exit(0)
