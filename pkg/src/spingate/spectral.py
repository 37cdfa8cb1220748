"""Harmonic retrieval: shifted eigenvalues and gateway eigenvector rows from signals.

Frequencies come from a matrix pencil on stacked Hankel matrices (one
experiment family at a time), lines are merged across families by
single-linkage clustering, amplitudes are least-squares fits against the
merged Vandermonde basis, and the rank-1 amplitude structure
a[(n0, n)] = W[n] W[n0] is factored with a per-line reference site.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AliasingSuspected,
    DarkLine,
    GaugeFailure,
    IllConditioned,
    InputError,
    RankAmbiguity,
)


@dataclass(frozen=True)
class PencilResult:
    frequencies: np.ndarray
    singular_values: np.ndarray
    rank: int
    threshold: float
    root_modulus_error: float


@dataclass
class SpectralLine:
    frequency: float
    amplitudes: dict  # (n0, n) -> complex
    sources: tuple = ()  # experiment families where the pencil saw this line


@dataclass
class EigendataEstimate:
    frequencies: np.ndarray  # ascending, shifted (E_j - E0)
    gateway: list  # sorted gateway nodes, row order of ``components``
    components: np.ndarray  # components[i, j] ~ <gateway[i]|E_j>
    diagnostics: dict = field(default_factory=dict)

    def row(self, node: int) -> np.ndarray:
        return self.components[self.gateway.index(node)]

    @property
    def line_count(self) -> int:
        return len(self.frequencies)

    def shifted_by(self, kappa: float) -> "EigendataEstimate":
        return EigendataEstimate(
            self.frequencies + kappa, list(self.gateway), self.components.copy(), dict(self.diagnostics)
        )


def _hankel(x: np.ndarray, pencil: int) -> np.ndarray:
    rows = len(x) - pencil
    idx = np.arange(rows)[:, None] + np.arange(pencil + 1)[None, :]
    return x[idx]


def estimate_frequencies(
    signals,
    dt: float,
    model_order_max: int | None = None,
    *,
    rel_tol: float = 1e-8,
    noise_factor: float | None = None,
    gap_ratio: float = 10.0,
    max_abs_frequency: float | None = None,
    edge_fraction: float = 0.05,
) -> PencilResult:
    """Matrix-pencil frequencies shared by a set of uniformly sampled signals.

    Parameters
    ----------
    signals : array, shape (P, K)
        Complex samples s(k dt), k = 0..K-1, all with the same poles.
    dt : float
        Sampling step.
    model_order_max : int, optional
        Cap on the number of lines.  Defaults to the pencil length.
    rel_tol : float
        Singular values below ``rel_tol * s_max`` are treated as zero.
    noise_factor : float, optional
        Shot-noise mode: the threshold becomes ``noise_factor * median(s)``
        (or ``rel_tol * s_max`` if larger).
    gap_ratio : float
        Minimum ratio between the last kept and first dropped singular value;
        a smaller gap raises :class:`RankAmbiguity`.
    max_abs_frequency : float, optional
        Known spectral bound.  Lines beyond it are aliases and raise
        :class:`AliasingSuspected`; without it, lines within ``edge_fraction``
        of the Nyquist edge do.
    """
    x = np.atleast_2d(np.asarray(signals, dtype=complex))
    n_samples = x.shape[1]
    pencil = n_samples // 2
    if model_order_max is None:
        model_order_max = pencil
    if n_samples < 2 * model_order_max or pencil < 1:
        raise InputError(f"{n_samples} samples cannot resolve {model_order_max} lines")
    y = np.vstack([_hankel(row, pencil) for row in x])
    _, s, vh = np.linalg.svd(y, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return PencilResult(np.zeros(0), s, 0, 0.0, 0.0)
    threshold = rel_tol * s[0]
    if noise_factor is not None:
        threshold = max(threshold, noise_factor * float(np.median(s)))
    rank = int(np.sum(s > threshold))
    if rank < len(s) and s[rank] > 0 and s[rank - 1] / s[rank] < gap_ratio:
        raise RankAmbiguity(
            f"no clear singular-value gap at rank {rank}: "
            f"s[{rank - 1}]={s[rank - 1]:.3e}, s[{rank}]={s[rank]:.3e}"
        )
    rank = min(rank, model_order_max)
    vr = vh[:rank].T
    roots = np.linalg.eigvals(np.linalg.pinv(vr[:-1]) @ vr[1:])
    freqs = np.sort(-np.angle(roots) / dt)
    nyquist = np.pi / dt
    if max_abs_frequency is not None:
        bad = freqs[np.abs(freqs) > max_abs_frequency * (1 + 1e-6) + 1e-12]
    else:
        bad = freqs[np.abs(freqs) > (1 - edge_fraction) * nyquist]
    if bad.size:
        raise AliasingSuspected(
            f"lines {np.round(bad, 6).tolist()} lie outside the expected band "
            f"(Nyquist {nyquist:.6g}); sampling is too coarse for this spectrum"
        )
    modulus_error = float(np.max(np.abs(np.abs(roots) - 1.0))) if rank else 0.0
    return PencilResult(freqs, s, rank, float(threshold), modulus_error)


def vandermonde(times, frequencies) -> np.ndarray:
    return np.exp(-1j * np.outer(np.asarray(times, float), np.asarray(frequencies, float)))


def estimate_amplitudes(signals, times, frequencies, cond_cap: float = 1e10):
    """Least-squares amplitudes of every signal on the given frequencies.

    Returns ``(amplitudes, relative_residuals, condition)`` with amplitudes of
    shape (P, J).
    """
    x = np.atleast_2d(np.asarray(signals, dtype=complex))
    freqs = np.asarray(frequencies, dtype=float)
    if freqs.size == 0:
        return np.zeros((x.shape[0], 0), complex), np.ones(x.shape[0]), 1.0
    vd = vandermonde(times, freqs)
    cond = float(np.linalg.cond(vd))
    if not np.isfinite(cond) or cond > cond_cap:
        raise IllConditioned(f"Vandermonde condition {cond:.3e} exceeds cap {cond_cap:.1e}")
    coef, *_ = np.linalg.lstsq(vd, x.T, rcond=None)
    fit = vd @ coef
    norms = np.linalg.norm(x, axis=1)
    resid = np.linalg.norm(x.T - fit, axis=0) / np.where(norms > 0, norms, 1.0)
    return coef.T, resid, cond


def _merge_groups(values, tol):
    # single-linkage clustering in 1-d: sort, then cut wherever the gap exceeds tol
    order = np.argsort(values, kind="stable")
    groups, current = [], [order[0]]
    for prev, nxt in zip(order[:-1], order[1:]):
        if values[nxt] - values[prev] <= tol:
            current.append(nxt)
        else:
            groups.append(current)
            current = [nxt]
    groups.append(current)
    return groups


def _projected_residual(times, signals, frequencies):
    vd = vandermonde(times, frequencies)
    coef, *_ = np.linalg.lstsq(vd, signals.T, rcond=None)
    return signals.T - vd @ coef


def refine_frequencies(signals, times, frequencies) -> np.ndarray:
    """Joint nonlinear least-squares polish of shared frequencies.

    Variable projection: amplitudes are eliminated by linear least squares,
    so only the frequencies are iterated (Levenberg-Marquardt).
    """
    from scipy.optimize import least_squares

    x = np.atleast_2d(np.asarray(signals, dtype=complex))
    f0 = np.asarray(frequencies, float)
    if f0.size == 0:
        return f0

    def residual(freqs):
        r = _projected_residual(times, x, freqs).ravel()
        return np.concatenate([r.real, r.imag])

    sol = least_squares(residual, f0, method="lm")
    return np.sort(sol.x)


def complete_lines(signals, times, frequencies, target: int, band: float, grid_points: int = 8000):
    """Add lines at the strongest residual periodogram peak until ``target`` lines.

    Each insertion is followed by a joint refinement.  Used under shot noise,
    where lines with small gateway weight sink below the singular-value
    threshold.  Returns ``(frequencies, inserted)``.
    """
    x = np.atleast_2d(np.asarray(signals, dtype=complex))
    times = np.asarray(times, float)
    freqs = np.sort(np.asarray(frequencies, float))
    grid = np.linspace(-band, band, grid_points)
    probe = np.exp(1j * np.outer(grid, times))
    inserted = 0
    while len(freqs) < target:
        resid = _projected_residual(times, x, freqs) if len(freqs) else x.T
        power = np.sum(np.abs(probe @ resid) ** 2, axis=1)
        freqs = refine_frequencies(x, times, np.append(freqs, grid[np.argmax(power)]))
        inserted += 1
    return freqs, inserted


@dataclass
class SpectralOptions:
    rel_tol: float = 1e-8
    noise_factor: float | None = None
    gap_ratio: float = 10.0
    merge_rel_tol: float = 1e-6
    merge_abs_tol: float = 1e-9
    cond_cap: float = 1e10
    max_abs_frequency: float | None = None
    model_order_max: int | None = None
    # shot-noise extras: polish merged lines jointly, and fill up to a known count
    refine: bool = False
    expected_count: int | None = None

    @classmethod
    def for_shots(cls, times, expected_count: int, max_abs_frequency: float) -> "SpectralOptions":
        window = float(times[-1] - times[0]) if len(times) > 1 else 1.0
        return cls(
            noise_factor=3.0,
            gap_ratio=1.0,
            merge_rel_tol=0.0,
            merge_abs_tol=0.2 * 2 * np.pi / window,
            max_abs_frequency=max_abs_frequency,
            refine=True,
            expected_count=expected_count,
        )


def estimate_lines(dataset, options: SpectralOptions | None = None):
    """Run the pencil per experiment family, merge lines, refit all amplitudes.

    Returns ``(lines, diagnostics)``.
    """
    opts = options or SpectralOptions()
    dt = dataset.dt
    found, weights, owners = [], [], []
    families = {}
    # with refinement a single pencil over every signal gives the starting set
    groups = [(tuple(dataset.initial_sites), dataset.values)] if opts.refine else [
        ((n0,), dataset.family(n0)[1]) for n0 in dataset.initial_sites
    ]
    for srcs, values in groups:
        res = estimate_frequencies(
            values,
            dt,
            opts.model_order_max,
            rel_tol=opts.rel_tol,
            noise_factor=opts.noise_factor,
            gap_ratio=opts.gap_ratio,
            max_abs_frequency=opts.max_abs_frequency,
        )
        amps, _, _ = estimate_amplitudes(values, dataset.times, res.frequencies, opts.cond_cap)
        found.extend(res.frequencies)
        weights.extend(np.sum(np.abs(amps) ** 2, axis=0))
        owners.extend([srcs] * res.rank)
        families[",".join(str(n + 1) for n in srcs)] = {
            "rank": res.rank,
            "threshold": res.threshold,
            "root_modulus_error": res.root_modulus_error,
        }
    diagnostics = {"families": families}
    merged, sources, conflicts, tol = [], [], 0, None
    if found:
        found = np.asarray(found)
        weights = np.asarray(weights)
        spread = float(found.max() - found.min())
        tol = max(opts.merge_abs_tol, opts.merge_rel_tol * spread)
        for g in _merge_groups(found, tol):
            w = weights[g]
            merged.append(float(np.average(found[g], weights=w)) if w.sum() > 0 else float(found[g].mean()))
            srcs = [owners[i] for i in g]
            conflicts += len(srcs) - len(set(srcs))
            sources.append(tuple(sorted({n for s in srcs for n in s})))
    merged = np.asarray(merged, float)
    diagnostics.update(pencil_line_count=len(merged), merge_tolerance=tol, merge_conflicts=conflicts)
    if opts.refine or opts.expected_count is not None:
        if opts.expected_count is not None and len(merged) > opts.expected_count:
            amps, _, _ = estimate_amplitudes(dataset.values, dataset.times, merged, np.inf)
            keep = np.sort(np.argsort(np.sum(np.abs(amps) ** 2, axis=0))[::-1][: opts.expected_count])
            merged = merged[keep]
        if len(merged):
            merged = refine_frequencies(dataset.values, dataset.times, merged)
        inserted = 0
        if opts.expected_count is not None and len(merged) < opts.expected_count:
            band = opts.max_abs_frequency if opts.max_abs_frequency else np.pi / dt
            merged, inserted = complete_lines(dataset.values, dataset.times, merged, opts.expected_count, band)
        diagnostics["inserted_lines"] = inserted
        sources = [tuple(dataset.initial_sites)] * len(merged)
    amps, resid, cond = estimate_amplitudes(dataset.values, dataset.times, merged, opts.cond_cap)
    lines = [
        SpectralLine(float(f), {pair: complex(amps[k, j]) for k, pair in enumerate(dataset.pairs)}, sources[j])
        for j, f in enumerate(merged)
    ]
    diagnostics.update(
        line_count=len(lines),
        fit_residual_max=float(resid.max()) if resid.size else 0.0,
        vandermonde_condition=cond,
    )
    return lines, diagnostics


def exact_lines(eig, gateway, group_tol: float | None = None) -> list:
    """The lines ideal noise-free tomography would report for ``eig``.

    Degenerate eigenvalues collapse into one line whose amplitudes are the
    projector elements, exactly as they appear in the signals.
    """
    from .degeneracy import cluster_eigenvalues

    nodes = sorted(gateway)
    lines = []
    for members in cluster_eigenvalues(eig.eigenvalues, group_tol):
        v = eig.vectors[:, members]
        block = v[nodes] @ v[nodes].T
        amps = {(n0, n): complex(block[i0, i]) for i0, n0 in enumerate(nodes) for i, n in enumerate(nodes)}
        freq = float(np.mean(eig.shifted[members]))
        lines.append(SpectralLine(freq, amps, tuple(nodes)))
    return lines


def assemble_eigendata(
    lines,
    gateway,
    *,
    imag_tol: float = 1e-6,
    amplitude_floor: float = 1e-24,
) -> EigendataEstimate:
    """Factor each line's amplitudes into real gateway components.

    For line j the reference site r maximises |a[(r, r)]|; then
    W[r] = sqrt(a[(r, r)]) > 0 and W[n] = a[(r, n)] / W[r].  Every other
    available product is used as a consistency check.
    """
    nodes = sorted(gateway)
    lines = sorted(lines, key=lambda ln: ln.frequency)
    comps = np.zeros((len(nodes), len(lines)))
    imag_residue = 0.0
    inconsistency = 0.0
    references = []
    pivots = []
    for j, line in enumerate(lines):
        diag = {n0: line.amplitudes[(n0, n0)] for n0 in nodes if (n0, n0) in line.amplitudes}
        if not diag:
            raise DarkLine(f"line {line.frequency:.6g} has no return-signal amplitudes")
        ref = max(diag, key=lambda n0: (abs(diag[n0]), -n0))
        a_rr = diag[ref]
        if abs(a_rr) < amplitude_floor:
            raise DarkLine(
                f"line at {line.frequency:.6g} is dark on the whole gateway "
                "(impossible for an infecting gateway; check the gateway or the line merge)"
            )
        if a_rr.real < -imag_tol or abs(a_rr.imag) > imag_tol:
            raise GaugeFailure(f"reference amplitude {a_rr:.3e} at line {line.frequency:.6g} is not positive")
        w_ref = np.sqrt(max(a_rr.real, 0.0))
        if w_ref == 0.0:
            raise GaugeFailure(f"reference amplitude {a_rr:.3e} at line {line.frequency:.6g} is not positive")
        for i, n in enumerate(nodes):
            a = line.amplitudes.get((ref, n))
            if a is None:
                raise InputError(f"signal ({ref + 1} -> {n + 1}) missing from dataset")
            value = a / w_ref
            imag_residue = max(imag_residue, abs(value.imag))
            comps[i, j] = value.real
        index = {n: i for i, n in enumerate(nodes)}
        for (n0, n), a in line.amplitudes.items():
            if n0 in index and n in index:
                inconsistency = max(inconsistency, abs(a - comps[index[n], j] * comps[index[n0], j]))
        references.append(ref)
        pivots.append(float(w_ref))
    if imag_residue > imag_tol:
        raise GaugeFailure(f"imaginary residue {imag_residue:.3e} exceeds tolerance {imag_tol:.1e}")
    freqs = np.array([ln.frequency for ln in lines])
    diagnostics = {
        "line_count": len(lines),
        "imag_residue": float(imag_residue),
        "rank1_inconsistency": float(inconsistency),
        "reference_sites": references,
        "reference_magnitudes": pivots,
        "gateway_row_norms": np.sum(comps**2, axis=1).tolist(),
    }
    return EigendataEstimate(freqs, nodes, comps, diagnostics)


def eigendata_from_signals(dataset, gateway, options: SpectralOptions | None = None, **assemble_kw):
    lines, diag = estimate_lines(dataset, options)
    est = assemble_eigendata(lines, gateway, **assemble_kw)
    est.diagnostics.update(spectral=diag)
    return est


def fft_view(times, values, pad: int = 8):
    """Zero-padded FFT magnitude of one signal, on an angular-frequency axis.

    Display aid only; signals are exp(-i omega t), so the axis is flipped to
    put a line at +omega.
    """
    times = np.asarray(times, float)
    n = len(times) * pad
    dt = times[1] - times[0]
    spec = np.fft.fftshift(np.fft.fft(np.asarray(values), n)) / len(times)
    omega = -2 * np.pi * np.fft.fftshift(np.fft.fftfreq(n, dt))
    order = np.argsort(omega)
    return omega[order], np.abs(spec)[order]
