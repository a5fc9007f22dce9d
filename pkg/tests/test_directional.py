import os
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from constants import BlockId, HookMode, PathName
from creativity_metrics import Embedder, embed_image
from experiments import ExperimentConfig, ExperimentRunner, cosine_distance
from freq_catalyst import AmplificationProfile, AmplificationSpec, high_band_energy
from tensor_core import FeatureMap
from toy_denoiser import ConditioningSpec, HookSet, ModelConfig, SamplerConfig, build_model, sample

pytestmark = [
    pytest.mark.directional,
    pytest.mark.skipif(
        os.environ.get("C3_RUN_DIRECTIONAL") != "1",
        reason="set C3_RUN_DIRECTIONAL=1 to run desk-scale directional checks",
    ),
]

SEEDS = list(range(20))
COND = ConditioningSpec(concept="chair")


@pytest.fixture(scope="module")
def model():
    return build_model(ModelConfig())


def down0_hooks(lam, rho):
    profile = AmplificationProfile(blocks={BlockId.DOWN0: AmplificationSpec(lam=lam, rho=rho)})
    return HookSet(mode=HookMode.C3, c3_profile=profile)


def test_all_band_amplification_adds_more_high_frequency_than_low_band(model):
    sampler = SamplerConfig(steps=1)
    wins = 0
    for seed in SEEDS:
        all_band, _ = sample(model, sampler, COND, seed, down0_hooks(2.0, 1.0))
        low_band, _ = sample(model, sampler, COND, seed, down0_hooks(2.0, 0.25))
        if high_band_energy(FeatureMap(data=all_band.data), 0.25) > high_band_energy(
            FeatureMap(data=low_band.data), 0.25
        ):
            wins += 1
    assert wins >= 0.8 * len(SEEDS)


def test_novelty_grows_with_amplification_factor(model):
    sampler = SamplerConfig(steps=1)
    embedder = Embedder()
    monotone = 0
    for seed in SEEDS:
        baseline, _ = sample(model, sampler, COND, seed, HookSet())
        base_features = embed_image(baseline, embedder)
        distances = [
            cosine_distance(
                embed_image(sample(model, sampler, COND, seed, down0_hooks(lam, 0.25))[0], embedder),
                base_features,
            )
            for lam in (1.0, 1.5, 2.0)
        ]
        if np.all(np.diff(distances) >= -1e-9):
            monotone += 1
    assert monotone >= 0.9 * len(SEEDS)


def test_quant_novelty_exceeds_plain_split_half(tmp_path):
    config = ExperimentConfig(
        concepts=["chair", "car"], seeds=50, sampler=SamplerConfig(steps=1), out_dir=tmp_path
    )
    runner = ExperimentRunner(config, jobs=4)
    try:
        runner.select()
        runner.combine()
        report = pd.read_csv(runner.quant().parent / PathName.REPORT_CSV).set_index("concept")
    finally:
        runner.close()
    for concept in ("chair", "car"):
        assert report.loc[concept, "fid_star"] > report.loc[concept, "fid_star_plain_split"]
