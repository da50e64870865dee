#!/usr/bin/env python3
"""
Reconstruction Acceptance Suite

Measures the ten acceptance criteria of the d-bar reconstruction (zero
potential, Cauchy transform, Born limit, identities, round trips, DtN map,
traces, boundary transform, end-to-end recovery) at full resolution and
writes the measured values to acceptance_report.json.

Optionally smoke-tests a running service with --url.
"""

import argparse
import json
import logging
import sys
import time
from datetime import datetime
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import requests
from colorama import Fore, Style, init

from src.models.boundary import BoundaryFunction
from src.models.config import Phantom, RunConfig, SolverSettings
from src.models.grids import ComplexGrid, GridSpec, Potential
from src.services.boundary_dtn import assemble_dtn, boundary_scattering_transform, hilbert_Hb, recover_traces
from src.services.convection_link import einvb_on, phase_unwrap, q_from_b, w_trace
from src.services.dbar_forward import (born_decomposition, k_grid, scattering_grid,
                                       scattering_transform_volume, solve_psi_pair)
from src.services.dbar_inverse import identities_check, reconstruct_q, solve_phi_pair
from src.services.field_grids import cauchy_array, relative_error
from src.services.phantoms import make_phantom, taper
from src.services.pipeline import report_without_timings, run_pipeline
from src.utils.errors import DbarError
from src.utils.logging_setup import setup_logging
from src.utils.reporting import stable

init(autoreset=True)

logger = logging.getLogger(__name__)

TRACE_KS = [0.5 + 0j, 1.5 + 1.0j, -2.0 + 2.0j, -0.4 - 2.9j]


def gaussian_potential(nx: int, amplitude: float, width: float = 0.3) -> Potential:
    grid = ComplexGrid.from_function(
        nx, 2.0, lambda z: amplitude * np.exp(-np.abs(z) ** 2 / width ** 2) * taper(np.abs(z), 0.8),
    )
    return Potential(grid, 0.8)


class AcceptanceSuite:
    """Runs the acceptance criteria and records measured values against thresholds."""

    def __init__(self, workers: int = 1, output_dir: str = 'acceptance_output', base_url: Optional[str] = None):
        self.workers = workers
        self.output_dir = output_dir
        self.base_url = base_url.rstrip('/') if base_url else None
        self.settings = SolverSettings(tol=1e-11, max_iterations=800, restart=60, workers=workers)
        self.test_results = {
            'total_tests': 0,
            'passed_tests': 0,
            'failed_tests': 0,
            'test_details': [],
        }
        self._cache: Dict[str, Any] = {}

    def print_header(self, title: str):
        print(f"\n{Fore.CYAN}{'=' * 60}")
        print(f"{Fore.CYAN}{title.center(60)}")
        print(f"{Fore.CYAN}{'=' * 60}")

    def print_test_result(self, test_name: str, passed: bool, details: str = "",
                          measured: Any = None, threshold: Any = None, seconds: float = 0.0):
        status = f"{Fore.GREEN}PASS" if passed else f"{Fore.RED}FAIL"
        print(f"{test_name:<48} [{status}{Style.RESET_ALL}]")
        if details:
            print(f"  {Fore.YELLOW}Details: {details}")

        self.test_results['total_tests'] += 1
        if passed:
            self.test_results['passed_tests'] += 1
        else:
            self.test_results['failed_tests'] += 1

        self.test_results['test_details'].append({
            'test_name': test_name,
            'passed': passed,
            'details': details,
            'measured': measured,
            'threshold': threshold,
            'seconds': round(seconds, 2),
            'timestamp': datetime.utcnow().isoformat(),
        })

    def check(self, test_name: str, measure: Callable[[], Dict[str, Any]]):
        """Run one measurement; ``measure`` returns passed/measured/threshold/details."""
        start = time.perf_counter()
        try:
            outcome = measure()
        except DbarError as e:
            logger.error(f"{test_name}: {e.message}")
            self.print_test_result(test_name, False, f"{type(e).__name__}: {e.message}",
                                   seconds=time.perf_counter() - start)
            return
        self.print_test_result(
            test_name, bool(outcome['passed']), outcome.get('details', ''),
            stable(outcome.get('measured')), outcome.get('threshold'),
            time.perf_counter() - start,
        )

    def run_all_tests(self, criteria: Optional[List[int]] = None):
        self.print_header("D-bar Reconstruction Acceptance Suite")
        print(f"{Fore.YELLOW}Workers: {self.workers}")
        print(f"{Fore.YELLOW}Output directory: {self.output_dir}")

        suite = {
            1: self.test_zero_potential,
            2: self.test_cauchy_transform,
            3: self.test_born_limit,
            4: self.test_identities,
            5: self.test_volume_round_trip,
            6: self.test_potential_link,
            7: self.test_dtn_map,
            8: self.test_trace_recovery,
            9: self.test_boundary_transform,
            10: self.test_end_to_end,
        }
        for number in criteria or sorted(suite):
            suite[number]()

        if self.base_url:
            self.test_service()

        return self.generate_test_report()

    # 1
    def test_zero_potential(self):
        self.print_header("1. Zero Potential")

        def measure():
            q = Potential(ComplexGrid.zeros(128, 2.0), 0.8)
            pair = solve_psi_pair(q, 1.3 - 0.4j, self.settings)
            t = scattering_grid(q, k_grid(32, 10.0), 8.0, self.settings)
            ones = bool(np.all(pair.psi_r.samples == 1.0) and np.all(pair.psi_i.samples == 1.0))
            max_t = float(np.max(np.abs(t.samples)))
            return {'passed': ones and max_t <= 1e-12, 'measured': max_t, 'threshold': 1e-12,
                    'details': f"psi identically 1: {ones}, max|t| = {max_t:.2e}"}

        self.check("Zero potential gives psi = 1, t = 0", measure)

    # 2
    def test_cauchy_transform(self):
        self.print_header("2. Cauchy Transform")

        def disk_error(nx):
            spec = GridSpec(nx, 2.0)
            z = spec.nodes()
            inside = np.abs(z) <= 1.0
            with np.errstate(divide='ignore', invalid='ignore'):
                exact = np.where(inside, np.conj(z), 1.0 / z)
            return spec.h, float(np.max(np.abs(cauchy_array(inside.astype(complex), 2.0) - exact)))

        def measure():
            h, fine = disk_error(256)
            _, coarse = disk_error(128)
            ratio = coarse / fine
            return {'passed': fine <= 3 * h and ratio >= 1.5, 'measured': {'max_error': fine, 'ratio': ratio},
                    'threshold': {'max_error': 3 * h, 'ratio': 1.5},
                    'details': f"max error {fine:.3e} (3h = {3 * h:.3e}), refinement ratio {ratio:.2f}"}

        self.check("Disk indicator closed form", measure)

    # 3
    def test_born_limit(self):
        self.print_header("3. Born Limit")

        def measure():
            deviations = []
            for delta in (0.1, 0.05, 0.025):
                parts = born_decomposition(gaussian_potential(128, delta), 1.2 - 0.7j, self.settings)
                deviations.append(abs(parts.remainder) / abs(parts.linear))
            ratios = [deviations[0] / deviations[1], deviations[1] / deviations[2]]
            return {'passed': all(r >= 1.5 for r in ratios), 'measured': {'deviations': deviations, 'ratios': ratios},
                    'threshold': {'ratio': 1.5},
                    'details': f"halving ratios {ratios[0]:.2f}, {ratios[1]:.2f}"}

        self.check("Relative Born remainder halves with amplitude", measure)

    def _volume_transform(self, amplitude: float):
        key = f"t{amplitude}"
        if key not in self._cache:
            q = gaussian_potential(128, amplitude)
            self._cache[key] = (q, scattering_grid(q, k_grid(64, 10.0), 8.0, self.settings))
        return self._cache[key]

    # 4
    def test_identities(self):
        self.print_header("4. Psi/Phi Identities")

        def measure():
            q, t = self._volume_transform(0.3)
            rng = np.random.default_rng(0)
            worst = 0.0
            for _ in range(5):
                z = 0.5 * np.sqrt(rng.uniform()) * np.exp(2j * np.pi * rng.uniform())
                k = 1.4 * np.sqrt(rng.uniform()) * np.exp(2j * np.pi * rng.uniform())
                worst = max(worst, identities_check(solve_psi_pair(q, complex(k), self.settings),
                                                    solve_phi_pair(t, complex(z), self.settings)))
            return {'passed': worst <= 1e-4, 'measured': worst, 'threshold': 1e-4,
                    'details': f"max deviation over 5 pairs {worst:.3e}"}

        self.check("Identities at random (z, k)", measure)

    # 5
    def test_volume_round_trip(self):
        self.print_header("5. Nonlinear Fourier Round Trip")

        def measure():
            q, t = self._volume_transform(0.5)
            q_hat = reconstruct_q(t, GridSpec(128, 2.0), 0.9, self.settings)
            error = relative_error(q_hat.samples, q.samples, 2, q.h)
            return {'passed': error <= 0.05, 'measured': error, 'threshold': 0.05,
                    'details': f"relative L2 error {error:.3%}"}

        self.check("q -> t -> q round trip", measure)

    def _gauss_field(self):
        if 'field' not in self._cache:
            self._cache['field'] = make_phantom(Phantom(), 128, 2.0)
        return self._cache['field']

    # 6
    def test_potential_link(self):
        self.print_header("6. Potential / Coefficient Link")
        field = self._gauss_field()

        def modulus():
            q = q_from_b(field)
            gap = float(np.max(np.abs(np.abs(q.samples) - np.abs(field.b.samples))))
            return {'passed': gap <= 1e-12, 'measured': gap, 'threshold': 1e-12,
                    'details': f"max ||q| - |b|| = {gap:.2e}"}

        def unwrap():
            b_hat = phase_unwrap(q_from_b(field), settings=self.settings).field
            error = max(relative_error(b_hat.b1, field.b1, 2, field.h),
                        relative_error(b_hat.b2, field.b2, 2, field.h))
            return {'passed': error <= 1e-5, 'measured': error, 'threshold': 1e-5,
                    'details': f"relative L2 error {error:.2e}"}

        self.check("|q| = |b|", modulus)
        self.check("Phase unwrap b -> q -> b", unwrap)

    # 7
    def test_dtn_map(self):
        self.print_header("7. DtN Map")
        zero = make_phantom(Phantom(amplitude=0.0), 64, 2.0)

        def diagonal():
            dtn = assemble_dtn(zero, 16, 24)
            gap = float(np.max(np.abs(dtn.matrix - np.diag(np.abs(dtn.orders)))))
            return {'passed': gap <= 1e-8, 'measured': gap, 'threshold': 1e-8,
                    'details': f"max deviation from diag |n| = {gap:.2e}"}

        def hilbert():
            dtn = assemble_dtn(zero, 16, 24)
            gap = 0.0
            for n in range(1, 9):
                image = hilbert_Hb(dtn, BoundaryFunction.from_function(128, lambda t: np.sin(n * t)))
                gap = max(gap, float(np.max(np.abs(image.values - np.cos(n * image.theta)))))
            return {'passed': gap <= 1e-8, 'measured': gap, 'threshold': 1e-8,
                    'details': f"max |H0(sin n) - cos n| = {gap:.2e}"}

        self.check("Zero-field DtN diagonal", diagonal)
        self.check("Hilbert transform of sin(n theta)", hilbert)

    def _gauss_dtn(self):
        if 'dtn' not in self._cache:
            self._cache['dtn'] = assemble_dtn(self._gauss_field(), 32, 48)
        return self._cache['dtn']

    # 8
    def test_trace_recovery(self):
        self.print_header("8. Trace Recovery")

        def measure():
            field, dtn = self._gauss_field(), self._gauss_dtn()
            worst = 0.0
            for k in TRACE_KS:
                h_r, _, _ = recover_traces(dtn, k, 16)
                oracle = np.exp(1j * h_r.z * k) * w_trace(field, k, 'r', h_r.z, settings=self.settings)
                worst = max(worst, float(np.max(np.abs(h_r.values - oracle)) / np.max(np.abs(oracle))))
            return {'passed': worst <= 1e-3, 'measured': worst, 'threshold': 1e-3,
                    'details': f"max relative sup error over {len(TRACE_KS)} k values {worst:.2e}"}

        self.check("h_r against whole-plane traces", measure)

    # 9
    def test_boundary_transform(self):
        self.print_header("9. Boundary Scattering Transform")

        def measure():
            field, dtn = self._gauss_field(), self._gauss_dtn()
            q = q_from_b(field)
            worst = 0.0
            for k in TRACE_KS:
                h_r, h_i, _ = recover_traces(dtn, k, 16)
                einvb = BoundaryFunction(einvb_on(field, h_r.z))
                boundary = boundary_scattering_transform(h_r, h_i, einvb, k)
                volume = scattering_transform_volume(q, k, self.settings)
                worst = max(worst, abs(boundary - volume) / abs(volume))
            return {'passed': worst <= 1e-3, 'measured': worst, 'threshold': 1e-3,
                    'details': f"max relative error over {len(TRACE_KS)} k values {worst:.2e}"}

        self.check("Boundary t against volume t", measure)

    # 10
    def test_end_to_end(self):
        self.print_header("10. End-to-End Reconstruction")
        cfg = RunConfig(workers=self.workers, output_dir=f"{self.output_dir}/pipeline")
        spec = Phantom()

        def recovery():
            report = run_pipeline(cfg, spec)
            self._cache['report'] = report
            error = max(report['errors']['b1'], report['errors']['b2'])
            return {'passed': error <= 0.10, 'measured': report['errors'], 'threshold': 0.10,
                    'details': f"b1 error {report['errors']['b1']:.3%}, b2 error {report['errors']['b2']:.3%}"}

        def determinism():
            if 'report' not in self._cache:
                return {'passed': False, 'details': 'first run did not complete'}
            repeat = run_pipeline(cfg.model_copy(update={'output_dir': f"{self.output_dir}/pipeline_repeat"}), spec)
            same = report_without_timings(repeat) == report_without_timings(self._cache['report'])
            return {'passed': same, 'measured': same, 'threshold': True,
                    'details': 'repeated run report identical' if same else 'repeated run differs'}

        self.check("Full pipeline recovers b1, b2", recovery)
        self.check("Repeated pipeline run is identical", determinism)

    def test_service(self):
        self.print_header("Service Smoke Test")
        session = requests.Session()

        try:
            response = session.get(f"{self.base_url}/api/health", timeout=10)
            self.print_test_result("Health endpoint", response.status_code == 200,
                                   f"Status: {response.status_code}")
        except requests.exceptions.RequestException as e:
            self.print_test_result("Health endpoint", False, f"Connection error: {str(e)}")
            return

        try:
            response = session.post(f"{self.base_url}/api/config/validate", json={'config': {}}, timeout=30)
            body = response.json()
            self.print_test_result("Default config validates", bool(body.get('success')), body.get('message', ''))
        except (requests.exceptions.RequestException, ValueError) as e:
            self.print_test_result("Default config validates", False, f"Error: {str(e)}")

    def generate_test_report(self) -> float:
        self.print_header("Test Results Summary")

        total = self.test_results['total_tests']
        passed = self.test_results['passed_tests']
        failed = self.test_results['failed_tests']
        pass_rate = (passed / total * 100) if total > 0 else 0

        print(f"{Fore.CYAN}Total Tests: {total}")
        print(f"{Fore.GREEN}Passed: {passed}")
        print(f"{Fore.RED}Failed: {failed}")
        print(f"{Fore.CYAN}Pass Rate: {pass_rate:.1f}%")

        if pass_rate == 100:
            status_color, status = Fore.GREEN, "ACCEPTED"
        elif pass_rate >= 75:
            status_color, status = Fore.YELLOW, "NEEDS CALIBRATION"
        else:
            status_color, status = Fore.RED, "CRITICAL ISSUES"
        print(f"\n{status_color}Overall Status: {status}")

        report_data = {
            'test_summary': self.test_results,
            'test_environment': {
                'workers': self.workers,
                'output_dir': self.output_dir,
                'base_url': self.base_url,
                'timestamp': datetime.utcnow().isoformat(),
            },
            'recommendations': self._generate_recommendations(),
        }
        with open('acceptance_report.json', 'w') as f:
            json.dump(report_data, f, indent=2)

        print(f"\n{Fore.CYAN}Detailed report saved to: acceptance_report.json")
        return pass_rate

    def _generate_recommendations(self) -> List[str]:
        recommendations = []
        failed_tests = [test for test in self.test_results['test_details'] if not test['passed']]

        for test in failed_tests:
            name = test['test_name'].lower()
            if 'round trip' in name or 'pipeline' in name:
                recommendations.append("Increase nx or K, or lower the phantom amplitude")
            elif 'h_r' in name or 'boundary' in name:
                recommendations.append("Raise modes / series_n or lower reg for trace recovery")
            elif 'identities' in name:
                recommendations.append("Tighten the Krylov tolerance")
            elif 'endpoint' in name or 'validates' in name:
                recommendations.append("Check that the service is running at the given URL")

        if not recommendations:
            recommendations.append("All measured criteria are within their thresholds")
        return sorted(set(recommendations))


def main():
    parser = argparse.ArgumentParser(description='D-bar reconstruction acceptance suite')
    parser.add_argument('--workers', type=int, default=1, help='Parallel solves per stage')
    parser.add_argument('--output-dir', default='acceptance_output', help='Directory for pipeline artifacts')
    parser.add_argument('--criteria', type=int, nargs='*', choices=range(1, 11), help='Run only these criteria')
    parser.add_argument('--url', help='Base URL of a running service to smoke-test')
    args = parser.parse_args()

    setup_logging('acceptance_results.log')

    suite = AcceptanceSuite(workers=args.workers, output_dir=args.output_dir, base_url=args.url)
    pass_rate = suite.run_all_tests(args.criteria)
    sys.exit(0 if pass_rate == 100 else 1)


if __name__ == "__main__":
    main()
