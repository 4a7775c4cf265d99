import numpy as np
import pytest
import torch

from hern.model import ModelConfig

torch.set_num_threads(1)


@pytest.fixture
def tiny_config():
    return ModelConfig(
        G=2, B=2, M=2, P=2, global_width=8, local_width=8,
        encoder_dim=8, fixed_res=16,
    )


def random_raw(shape, seed=0):
    return np.random.default_rng(seed).uniform(0.0, 1.0, size=shape).astype(np.float32)


def finite_difference_grads(loss_fn, params, step=1e-5):
    """Central finite differences of a scalar loss w.r.t. every parameter
    element. Independent of autograd: only forward evaluations."""
    grads = {}
    with torch.no_grad():
        for name, p in params.items():
            flat = p.view(-1)
            g = torch.zeros_like(flat)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + step
                hi = loss_fn()
                flat[i] = orig - step
                lo = loss_fn()
                flat[i] = orig
                g[i] = (hi - lo) / (2 * step)
            grads[name] = g.view_as(p)
    return grads
