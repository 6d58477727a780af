#!/usr/bin/env python3
"""
TSP-AQM - Installation Verification Script

This script verifies that the package and its numerical stack are installed
and produce the known results on small models. It takes a few seconds.
"""

import sys
import tempfile
from pathlib import Path


def test_package_import():
    """Test if the package can be imported"""
    try:
        import tsp_aqm
        print(f"✅ Package imported successfully - Version: {getattr(tsp_aqm, '__version__', 'Unknown')}")
        return True
    except ImportError as e:
        print(f"❌ Failed to import package: {e}")
        return False


def test_dependencies():
    """Test if numpy, scipy, simpy and matplotlib are importable"""
    try:
        import matplotlib
        import numpy
        import scipy
        import simpy

        print("✅ Dependencies available:")
        print(f"   - numpy {numpy.__version__}")
        print(f"   - scipy {scipy.__version__}")
        print(f"   - simpy {getattr(simpy, '__version__', 'unknown')}")
        print(f"   - matplotlib {matplotlib.__version__}")
        return True
    except ImportError as e:
        print(f"❌ Missing dependency: {e}")
        print("   Run 'pip install -e .' from the repository root")
        return False


def test_small_instance():
    """Test the 8-state model against its exact RT loss probability 1/3"""
    try:
        from tsp_aqm.generator import build_generator
        from tsp_aqm.metrics import qos_report
        from tsp_aqm.models import ModelParams
        from tsp_aqm.solver import solve_stationary_direct

        params = ModelParams(capacity_n=4, threshold_r=1, threshold_l=2, lambda_rt=1.0,
                             lambda_nrt=1.0, mu_rt=2.0, mu_nrt=3.0)
        report = qos_report(solve_stationary_direct(build_generator(params)), params)
        if abs(report.p_lrt - 1.0 / 3.0) > 1e-12:
            print(f"❌ Small instance gave p_lrt={report.p_lrt!r}, expected 1/3")
            return False
        print("✅ Small instance solved exactly")
        return True
    except Exception as e:
        print(f"❌ Small instance solve failed: {e}")
        return False


def test_reference_model():
    """Test the reference model: 2201 states, p_lrt = 1/31"""
    try:
        from tsp_aqm.jobs import run_solve
        from tsp_aqm.models import ModelParams

        row = run_solve(ModelParams.canonical())
        if abs(row.p_lrt - 1.0 / 31.0) > 1e-9:
            print(f"❌ Reference model gave p_lrt={row.p_lrt!r}, expected 1/31")
            return False
        print(f"✅ Reference model solved (residual {row.residual:.2e})")
        return True
    except Exception as e:
        print(f"❌ Reference model solve failed: {e}")
        return False


def test_simulator():
    """Test a short simulation run"""
    try:
        from tsp_aqm.models import ModelParams
        from tsp_aqm.simulator import SimConfig, simulate_run

        params = ModelParams(capacity_n=16, threshold_r=4, threshold_l=6, lambda_rt=3.0,
                             lambda_nrt=4.0, mu_rt=5.0, mu_nrt=6.0)
        estimate = simulate_run(SimConfig(params=params, seed=1, warmup_events=1_000,
                                          measured_events=10_000, batches=10))
        print(f"✅ Simulator ran: {estimate.rt_arrivals} RT arrivals, {estimate.nrt_admissions} NRT admissions")
        return True
    except Exception as e:
        print(f"❌ Simulator test failed: {e}")
        return False


def test_chart_backend():
    """Test that an SVG chart can be written without a display"""
    try:
        from tsp_aqm.jobs import Figure3Job

        with tempfile.TemporaryDirectory() as tmp:
            Figure3Job().run(tmp, chart=True, grid=(5.0, 35.0))
            if not (Path(tmp) / 'fig3.svg').exists():
                print("❌ Chart file was not written")
                return False
        print("✅ Chart backend works")
        return True
    except Exception as e:
        print(f"❌ Chart test failed: {e}")
        return False


def run_all_tests():
    """Run all verification tests"""
    print("🔍 TSP-AQM - Installation Verification")
    print("=" * 60)

    tests = [
        ("Package Import", test_package_import),
        ("Dependencies", test_dependencies),
        ("Small Instance", test_small_instance),
        ("Reference Model", test_reference_model),
        ("Simulator", test_simulator),
        ("Chart Backend", test_chart_backend),
    ]

    passed = 0
    failed = 0

    for test_name, test_func in tests:
        print(f"\n📋 Testing: {test_name}")
        if test_func():
            passed += 1
        else:
            failed += 1

    print("\n" + "=" * 60)
    print(f"📊 Test Results: {passed} passed, {failed} failed")

    if failed == 0:
        print("🎉 All tests passed! TSP-AQM is properly installed.")
        print("\n🌐 Next steps:")
        print("1. Solve a model: tsp-aqm solve --config model.cfg")
        print("2. Reproduce a figure: tsp-aqm reproduce --figure 3 --out results/")
        return True
    else:
        print("⚠️  Some tests failed. Please address the issues above.")
        print("\n📖 For help, see README.md")
        return False


if __name__ == "__main__":
    success = run_all_tests()
    sys.exit(0 if success else 1)
