"""Finite-difference verification of analytic gradients.

Central differences are only a valid oracle where the loss is locally
smooth; a relu network is piecewise smooth, and a probe step that
straddles a kink measures the average of two branches rather than the
derivative. Each sampled index is therefore screened by comparing the
central difference at step h against step h/2: if the two disagree the
interval contains a kink and the index is resampled. Valid samples are
Richardson-extrapolated for O(h^4) truncation error.
"""

def check_gradients(loss_builder, named_params, rng, samples_per_param=4,
                    step=1e-4, tol=1e-4, floor=1e-6):
    """Compare backward gradients against central finite differences.

    loss_builder runs a fresh forward pass and returns the scalar loss
    tensor. Relative error uses max(|analytic|, |numeric|, floor) as the
    denominator. Returns (max_rel_err, failures) with failures listing
    (name, index, analytic, numeric, rel_err) above tol.
    """
    named_params = list(named_params)
    for _, p in named_params:
        p.zero_grad()
    loss_builder().backward()
    analytic = {name: p.grad.copy() for name, p in named_params}

    max_err = 0.0
    failures = []
    for name, p in named_params:
        flat = p.data.reshape(-1)
        want = min(samples_per_param, flat.size)
        tried = set()
        valid = 0
        budget = 6 * want
        while valid < want and budget > 0 and len(tried) < flat.size:
            budget -= 1
            idx = int(rng.integers(0, flat.size))
            if idx in tried:
                continue
            tried.add(idx)
            numeric = _smooth_central_difference(loss_builder, flat, idx, step)
            if numeric is None:
                continue  # kink inside the probe interval
            valid += 1
            a = analytic[name].reshape(-1)[idx]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            max_err = max(max_err, rel)
            if rel > tol:
                failures.append((name, idx, float(a), float(numeric), float(rel)))
    return max_err, failures


def _smooth_central_difference(loss_builder, flat, idx, step):
    fd_full = _central(loss_builder, flat, idx, step)
    fd_third = _central(loss_builder, flat, idx, step / 3.0)
    scale = max(abs(fd_full), abs(fd_third), 1e-3)
    if abs(fd_full - fd_third) > 3e-4 * scale:
        return None
    return (9.0 * fd_third - fd_full) / 8.0


def _central(loss_builder, flat, idx, h):
    original = flat[idx]
    flat[idx] = original + h
    f_plus = loss_builder().item()
    flat[idx] = original - h
    f_minus = loss_builder().item()
    flat[idx] = original
    return (f_plus - f_minus) / (2.0 * h)
