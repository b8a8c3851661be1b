"""Invariants every solve report must satisfy, shared by the property and acceptance suites."""

import numpy as np

from regret_adjust.algorithm import AddedBy, Status, verify_certificate


def longest_run(origins, kind):
    best = run = 0
    for o in origins:
        run = run + 1 if o is kind else 0
        best = max(best, run)
    return best


def check_report(instance, report, epsilon):
    """Return a list of violated invariants (empty when all hold)."""
    problems = []
    rks = np.array([r.rK for r in report.history])
    slack = 1e-7 * (1 + np.abs(rks[:-1]))
    if np.any(np.diff(rks) < -slack):
        problems.append(f"rK decreased: {rks.tolist()}")
    if longest_run(report.origins, AddedBy.INFEASIBILITY) > 2**instance.n_u:
        problems.append("more than 2^n_u consecutive infeasibility additions")
    for rec in report.history:
        if rec.addedBy is AddedBy.INFEASIBILITY and not instance.uBox.is_vertex(rec.addedScenario):
            problems.append(f"iteration {rec.k}: infeasibility scenario is not a box vertex")
    if report.status is Status.CONVERGED:
        if not report.upperBound - report.lowerBound < epsilon:
            problems.append(f"converged with gap {report.upperBound - report.lowerBound}")
        cert = verify_certificate(instance, report)
        if not cert.passed:
            problems.append(f"certificate failed: {cert}")
    elif report.status is Status.ITERATION_BUDGET:
        if report.upperBound < report.lowerBound - 1e-7 * (1 + abs(report.lowerBound)):
            problems.append("upper bound below lower bound")
    else:
        problems.append(f"unexpected status {report.status}")
    return problems
