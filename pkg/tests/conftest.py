from types import SimpleNamespace

import numpy as np
import pytest

from dpmn.diffcore.node import Precision, set_precision
from dpmn.harness.gradcheck_suite import TOY_NET
from dpmn.harness.training import train_dpmn, train_psn
from dpmn.schemas.config import RunConfig
from dpmn.synthdata.dataset import build_dataset


@pytest.fixture(autouse=True)
def verify_precision():
    set_precision(Precision.VERIFY)
    yield
    set_precision(Precision.VERIFY)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def toy_net():
    """8×32 images, 4×16 token grid, two window groups."""
    return TOY_NET


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("data") / "synth"
    build_dataset(n_train=6, n_test_per_tier=2, master_seed=7, out_dir=root, workers=2)
    return root


def tiny_run_config(dataset) -> RunConfig:
    """A run small enough to train in seconds: one PGRM per branch at narrow widths."""
    return RunConfig(
        dataset=dataset,
        epochs=1,
        psn_epochs=1,
        batch=3,
        seed=3,
        precision="train",
        eval_alphas=(0.0, 0.5, 1.0),
        net={
            "n_pgrm": 1, "window_sizes": (2, 4), "heads": 2, "embed_dim": 8,
            "ffn_ratio": 1, "cmm_widths": (4, 4, 4), "psn_width": 4,
        },
    )


@pytest.fixture
def tiny_run(tiny_dataset):
    return tiny_run_config(tiny_dataset)


@pytest.fixture(scope="session")
def trained(tmp_path_factory, tiny_dataset):
    """TinyPSN and a frozen-strategy DPMN trained once on the tiny dataset."""
    config = tiny_run_config(tiny_dataset)
    root = tmp_path_factory.mktemp("trained")
    psn_path = root / "psn.ckpt"
    psn, psn_report = train_psn(config, psn_path)
    psn_bytes = psn_path.read_bytes()
    model, report = train_dpmn(config, psn_path, root / "dpmn")
    return SimpleNamespace(config=config, psn_path=psn_path, psn_bytes=psn_bytes, psn=psn,
                           psn_report=psn_report, model=model, report=report)
