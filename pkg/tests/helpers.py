from ifs_response import AffineMap, ProbabilisticIFS


def unchecked_ifs(ratios, translations=(1.0, 1.0), probs=(0.5, 0.5)):
    """Build a system that validation would reject (e.g. a shared fixed point)."""
    maps = tuple(AffineMap(float(r), float(d)) for r, d in zip(ratios, translations))
    return ProbabilisticIFS(maps, tuple(probs), _validated=True)
