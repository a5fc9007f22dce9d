import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import pytest
import requests
from pydantic import ValidationError
from typer.testing import CliRunner

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from cache_manager import CacheManager
from constants import BlockId, ScorerSource
from exceptions import (
    DomainError,
    InvariantViolationError,
    ScorerProtocolError,
    ScorerUnavailableError,
)
from factor_selection import (
    BlockSelection,
    CombinationConfig,
    RemoteScorer,
    ScorerBundle,
    ScorerConfig,
    SearchConfig,
    SearchGrid,
    TracePoint,
    UsabilityContext,
    aesthetic_proxy,
    alignment_proxy,
    clip_fraction,
    combine,
    default_target_sum,
    is_transient_error,
    make_scorer_bundle,
    scan_grid,
    score_remote,
    select_lambda,
    usability,
)
from scripts import mock_scorer as mock_scorer_script
from scripts.mock_scorer import MockScorerState, start_server
from toy_denoiser import ConditioningSpec, Image

COND = ConditioningSpec(concept="chair")


def noise_image(seed=0, size=16):
    return Image(data=np.random.default_rng(seed).uniform(0.1, 0.9, (3, size, size)))


@pytest.fixture
def mock_scorer():
    state = MockScorerState(aesthetic=6.5, alignment=7.0)
    server, url = start_server(state)
    yield state, url
    server.shutdown()
    server.server_close()


# ─── local proxies ──


def test_flat_gray_aesthetic_is_midpoint():
    gray = Image(data=np.full((3, 8, 8), 0.5))
    assert aesthetic_proxy(gray) == pytest.approx(5.0)


def test_aesthetic_range_and_clipping_penalty():
    black = Image(data=np.zeros((3, 8, 8)))
    assert clip_fraction(black) == 1.0
    assert 0.0 <= aesthetic_proxy(black) < 5.0
    assert 0.0 <= aesthetic_proxy(noise_image()) <= 10.0


def test_alignment_proxy_against_baseline():
    image = noise_image(1)
    same = alignment_proxy(image, UsabilityContext(conditioning=COND, baseline_image=image))
    other = alignment_proxy(image, UsabilityContext(conditioning=COND, baseline_image=noise_image(2)))
    assert same == pytest.approx(10.0)
    assert 0.0 <= other < same


def test_alignment_proxy_needs_baseline():
    with pytest.raises(InvariantViolationError):
        alignment_proxy(noise_image(), UsabilityContext(conditioning=COND))


def test_all_white_aesthetic_is_dominated_by_clipping():
    white = Image(data=np.ones((3, 8, 8)))
    assert aesthetic_proxy(white) == pytest.approx(0.1799, abs=1e-3)


def test_checkerboard_aesthetic_is_low():
    rows, cols = np.indices((16, 16))
    board = ((rows + cols) % 2).astype(np.float64)
    assert aesthetic_proxy(Image(data=np.stack([board] * 3))) < 5.0


def test_inverted_image_has_no_alignment():
    baseline = noise_image(3)
    inverted = Image(data=1.0 - baseline.data)
    assert alignment_proxy(inverted, UsabilityContext(conditioning=COND, baseline_image=baseline)) == 0.0


def test_slight_noise_keeps_alignment_high():
    baseline = noise_image(4)
    noisy = baseline.data + np.random.default_rng(5).normal(0.0, 0.01, baseline.data.shape)
    image = Image(data=np.clip(noisy, 0.0, 1.0))
    assert alignment_proxy(image, UsabilityContext(conditioning=COND, baseline_image=baseline)) > 9.0


def test_proxy_scores_stay_in_range_on_random_images():
    rng = np.random.default_rng(21)
    for _ in range(50):
        size = int(rng.choice([2, 4, 8, 16, 32]))
        kind = rng.integers(3)
        if kind == 0:
            data = rng.uniform(0.0, 1.0, (3, size, size))
        elif kind == 1:
            data = rng.integers(0, 2, (3, size, size)).astype(np.float64)
        else:
            data = np.full((3, size, size), rng.uniform(0.0, 1.0))
        image = Image(data=data)
        baseline = Image(data=rng.uniform(0.0, 1.0, (3, size, size)))
        assert 0.0 <= aesthetic_proxy(image) <= 10.0
        assert 0.0 <= alignment_proxy(image, UsabilityContext(conditioning=COND, baseline_image=baseline)) <= 10.0


# ─── search ──


def table_lookup(table):
    calls = []

    def mean_use(lam):
        calls.append(lam)
        return table[lam]

    return mean_use, calls


@pytest.mark.parametrize(
    "table, epsilon, expected",
    [
        ({1.0: 10.0, 1.5: 9.0, 2.0: 8.0, 2.5: 7.0}, 0.85, 1.5),
        ({1.0: 10.0, 1.5: 9.0, 2.0: 8.0, 2.5: 7.0}, 0.7, 2.5),
        ({1.0: 10.0, 1.5: 9.0, 2.0: 8.6, 2.5: 5.0}, 0.85, 2.0),
        ({1.0: 10.0, 1.5: 2.0, 2.0: 1.0}, 0.85, 1.0),
        ({1.0: 4.0, 1.5: 1.0, 2.0: 4.5}, 0.9, 2.0),
    ],
)
def test_scan_grid_picks_largest_feasible(table, epsilon, expected):
    early, calls = table_lookup(table)
    full, full_calls = table_lookup(table)
    lam_early, trace_early, baseline, threshold = scan_grid(table.keys(), early, epsilon, early_stop=True)
    lam_full, trace_full, _, _ = scan_grid(table.keys(), full, epsilon, early_stop=False)
    assert lam_early == lam_full == expected
    assert baseline == table[1.0]
    assert threshold == pytest.approx(epsilon * table[1.0])
    assert [p.lam for p in trace_full] == sorted(table)
    assert len(calls) <= len(full_calls) == len(table)


def test_scan_grid_epsilon_zero_takes_cap():
    table = {1.0: 5.0, 2.0: 0.0, 3.0: 0.0}
    mean_use, _ = table_lookup(table)
    assert scan_grid(table.keys(), mean_use, 0.0)[0] == 3.0


def test_check_optimality_rejects_non_maximal():
    selection = BlockSelection(
        block=BlockId.DOWN0,
        lambda_star=1.5,
        trace=[
            TracePoint(lam=1.0, use=5.0, feasible=True),
            TracePoint(lam=1.5, use=4.8, feasible=True),
            TracePoint(lam=2.0, use=4.9, feasible=True),
        ],
        baseline_use=5.0,
        threshold=4.25,
    )
    with pytest.raises(InvariantViolationError):
        selection.check_optimality()


def test_selection_json_roundtrip():
    selection = BlockSelection(
        block=BlockId.MID,
        lambda_star=2.0,
        trace=[TracePoint(lam=1.0, use=5.0, feasible=True), TracePoint(lam=2.0, use=4.5, feasible=True)],
        baseline_use=5.0,
        threshold=4.25,
    )
    data = selection.to_json_dict()
    assert data["trace"] == [[1.0, 5.0, True], [2.0, 4.5, True]]
    assert BlockSelection.from_json_dict(data) == selection


@pytest.mark.parametrize("values", [(1.0,), (1.5, 2.0), (1.0, 2.0, 1.5)])
def test_search_grid_validation(values):
    with pytest.raises(ValidationError):
        SearchGrid(values=values)


def darkening_generator(lam, seed):
    return Image(data=np.full((3, 4, 4), lam / 10.0))


def brightness_bundle():
    return ScorerBundle(
        ScorerSource.LOCAL_PROXY,
        aesthetic=lambda image: 10.0 * (1.0 - float(image.data.mean())),
        alignment=lambda image, ctx: 0.0,
    )


@pytest.mark.parametrize("use_threads", [False, True])
def test_select_lambda_with_synthetic_usability(use_threads):
    cfg = SearchConfig(
        epsilon=0.85,
        grids={BlockId.DOWN0: SearchGrid(values=(1.0, 1.5, 2.0, 2.5, 3.0))},
        seeds_per_point=3,
    )

    def ctx_builder(seed, baseline):
        return UsabilityContext(conditioning=COND, baseline_image=baseline)

    if use_threads:
        with ThreadPoolExecutor(max_workers=4) as pool:
            selection = select_lambda(
                BlockId.DOWN0, cfg, darkening_generator, ctx_builder, brightness_bundle(), mapper=pool.map
            )
    else:
        selection = select_lambda(BlockId.DOWN0, cfg, darkening_generator, ctx_builder, brightness_bundle())
    # use(lam) = 10 - lam, threshold 0.85 * 9
    assert selection.lambda_star == 2.0
    assert selection.baseline_use == pytest.approx(9.0)


def exhaustive_lambda_star(values, uses, epsilon):
    threshold = epsilon * uses[0]
    return max(lam for lam, use in zip(values, uses) if use >= threshold)


def table_search(values, uses, epsilon):
    """Runs select_lambda where grid index i renders an image whose usability is uses[i]."""
    index_of = {lam: i for i, lam in enumerate(values)}

    def generator(lam, seed):
        return Image(data=np.full((3, 4, 4), index_of[lam] / 16.0))

    def ctx_builder(seed, baseline):
        return UsabilityContext(conditioning=COND, baseline_image=baseline)

    bundle = ScorerBundle(
        ScorerSource.LOCAL_PROXY,
        aesthetic=lambda image: uses[int(round(float(image.data[0, 0, 0]) * 16))],
        alignment=lambda image, ctx: 0.0,
    )
    cfg = SearchConfig(
        epsilon=epsilon, grids={BlockId.DOWN1: SearchGrid(values=tuple(values))}, seeds_per_point=1
    )
    return select_lambda(BlockId.DOWN1, cfg, generator, ctx_builder, bundle)


def random_table(rng):
    count = int(rng.integers(2, 9))
    values = [1.0, *np.round(1.0 + np.cumsum(rng.uniform(0.1, 1.0, count - 1)), 6).tolist()]
    uses = rng.uniform(0.0, 10.0, count).tolist()
    return values, uses


def test_select_lambda_matches_exhaustive_scan_on_random_tables():
    rng = np.random.default_rng(11)
    for _ in range(100):
        values, uses = random_table(rng)
        epsilon = float(rng.uniform(0.0, 1.0))
        selection = table_search(values, uses, epsilon)
        assert selection.lambda_star == exhaustive_lambda_star(values, uses, epsilon)
        assert selection.trace[0].lam == 1.0 and selection.trace[0].feasible


def test_larger_epsilon_never_selects_a_larger_factor():
    rng = np.random.default_rng(12)
    epsilons = [0.0, 0.25, 0.5, 0.75, 0.9, 1.0]
    for _ in range(100):
        values, uses = random_table(rng)
        chosen = [table_search(values, uses, epsilon).lambda_star for epsilon in epsilons]
        assert all(a >= b for a, b in zip(chosen, chosen[1:]))


def test_usability_sums_scores():
    bundle = brightness_bundle()
    image = Image(data=np.full((3, 4, 4), 0.25))
    assert usability(image, UsabilityContext(conditioning=COND, baseline_image=image), bundle) == pytest.approx(7.5)


def test_usability_is_the_same_for_remote_and_local_scores(mock_scorer):
    _, url = mock_scorer
    image = noise_image()
    ctx = UsabilityContext(conditioning=COND, baseline_image=image)
    local = ScorerBundle(ScorerSource.LOCAL_PROXY, aesthetic=lambda img: 6.5, alignment=lambda img, c: 7.0)
    remote = ScorerBundle(
        ScorerSource.REMOTE,
        aesthetic=lambda img: 0.0,
        alignment=lambda img, c: 0.0,
        client=RemoteScorer(url, retries=0),
        fallback=False,
    )
    assert usability(image, ctx, remote) == usability(image, ctx, local) == pytest.approx(13.5)


# ─── combination ──


def selection_for(block, lam):
    return BlockSelection(
        block=block,
        lambda_star=lam,
        trace=[TracePoint(lam=1.0, use=5.0, feasible=True), TracePoint(lam=lam, use=4.5, feasible=True)],
        baseline_use=5.0,
        threshold=4.25,
    )


def test_combine_single_block_full_budget_is_exact():
    profile = combine([selection_for(BlockId.DOWN2, 7.3)], CombinationConfig(target_sum=1.0))
    assert profile.blocks[BlockId.DOWN2].lam == 7.3


def test_combine_splits_budget_evenly():
    profile = combine(
        [selection_for(BlockId.DOWN0, 3.0), selection_for(BlockId.MID, 2.0)], CombinationConfig(), steps=4
    )
    assert profile.target_sum == 0.6
    assert profile.scale_factors[BlockId.DOWN0] == pytest.approx(0.3)
    assert profile.blocks[BlockId.DOWN0].lam == pytest.approx(1.6)
    assert profile.blocks[BlockId.MID].lam == pytest.approx(1.3)


def test_combine_weights_and_cutoffs():
    profile = combine(
        [selection_for(BlockId.DOWN0, 3.0), selection_for(BlockId.MID, 3.0)],
        CombinationConfig(target_sum=1.0, weights={BlockId.DOWN0: 3.0, BlockId.MID: 1.0}),
        cutoffs={BlockId.MID: 0.5},
    )
    assert profile.blocks[BlockId.DOWN0].lam == pytest.approx(2.5)
    assert profile.blocks[BlockId.MID].lam == pytest.approx(1.5)
    assert profile.blocks[BlockId.MID].rho == 0.5


def test_combined_shares_sum_to_budget_on_random_fixtures():
    rng = np.random.default_rng(13)
    blocks = list(BlockId)[:4]
    for _ in range(50):
        chosen = [b for b in blocks if rng.random() < 0.7] or [blocks[0]]
        target_sum = float(rng.uniform(0.1, 2.0))
        weights = {b: float(rng.uniform(0.05, 5.0)) for b in chosen}
        lambdas = {b: float(rng.uniform(1.0, 10.0)) for b in chosen}
        profile = combine(
            [selection_for(b, lambdas[b]) for b in chosen],
            CombinationConfig(target_sum=target_sum, weights=weights),
        )
        assert abs(sum(profile.scale_factors.values()) - target_sum) <= 1e-12
        for b in chosen:
            share = profile.scale_factors[b]
            assert profile.blocks[b].lam == pytest.approx(1.0 + share * (lambdas[b] - 1.0), abs=1e-12)


@pytest.mark.parametrize(
    "selections, cfg",
    [
        ([], CombinationConfig()),
        ([selection_for(BlockId.DOWN0, 2.0)], CombinationConfig(weights={BlockId.MID: 1.0})),
    ],
)
def test_combine_domain_errors(selections, cfg):
    with pytest.raises(DomainError):
        combine(selections, cfg)


@pytest.mark.parametrize("weight", [0.0, -1.0, float("nan"), float("inf")])
def test_combination_config_rejects_bad_weights(weight):
    with pytest.raises(ValidationError):
        CombinationConfig(weights={BlockId.DOWN0: weight})


@pytest.mark.parametrize("steps, expected", [(1, 1.0), (4, 0.6), (25, 0.6)])
def test_default_target_sum(steps, expected):
    assert default_target_sum(steps) == expected


# ─── remote scorer ──


def test_remote_scorer_returns_scores(mock_scorer):
    state, url = mock_scorer
    assert score_remote(url, noise_image(), "chair") == (6.5, 7.0)
    assert state.concepts == ["chair"]


def test_remote_scorer_clamps_and_reads_blip(mock_scorer):
    state, url = mock_scorer
    state.aesthetic, state.alignment, state.blip = 12.0, -3.0, 0.8
    pair = RemoteScorer(url).score(noise_image(), "car")
    assert (pair.aesthetic, pair.alignment, pair.blip) == (10.0, 0.0, 0.8)


def test_remote_scorer_retries_then_succeeds(mock_scorer):
    state, url = mock_scorer
    state.fail_first = 2
    pair = RemoteScorer(url, retries=2, backoff=0.0).score(noise_image(), "chair")
    assert pair.aesthetic == 6.5
    assert state.requests == 3


def test_remote_scorer_gives_up(mock_scorer):
    state, url = mock_scorer
    state.fail_first = 100
    with pytest.raises(ScorerUnavailableError):
        RemoteScorer(url, retries=1, backoff=0.0).score(noise_image(), "chair")
    assert state.requests == 2


def test_remote_scorer_malformed_body_is_not_retried(mock_scorer):
    state, url = mock_scorer
    state.raw_body = "{not json"
    with pytest.raises(ScorerProtocolError):
        RemoteScorer(url, retries=3, backoff=0.0).score(noise_image(), "chair")
    assert state.requests == 1


def test_remote_scorer_connection_refused():
    state = MockScorerState()
    server, url = start_server(state)
    server.shutdown()
    server.server_close()
    with pytest.raises(ScorerUnavailableError):
        RemoteScorer(url, retries=0, backoff=0.0, timeout=2.0).score(noise_image(), "chair")


def test_remote_scorer_uses_disk_cache(mock_scorer, tmp_path):
    state, url = mock_scorer
    cache = CacheManager(tmp_path / "cache", url)
    try:
        scorer = RemoteScorer(url, cache=cache)
        first = scorer.score(noise_image(), "chair")
        second = scorer.score(noise_image(), "chair")
        scorer.score(noise_image(), "car")
    finally:
        cache.close()
    assert first == second
    assert state.requests == 2


def test_bundle_falls_back_to_local(mock_scorer):
    state, url = mock_scorer
    state.fail_first = 100
    cfg = ScorerConfig(source=ScorerSource.REMOTE, endpoint=url, retries=0, backoff=0.0)
    image = noise_image()
    ctx = UsabilityContext(conditioning=COND, baseline_image=image)
    pair = make_scorer_bundle(cfg).score(image, ctx)
    assert pair.aesthetic == pytest.approx(aesthetic_proxy(image))
    assert pair.alignment == pytest.approx(10.0)

    strict = make_scorer_bundle(cfg.model_copy(update={"fallback": False}))
    with pytest.raises(ScorerUnavailableError):
        strict.score(image, ctx)


def test_endpoint_override_wins(mock_scorer):
    state, url = mock_scorer
    cfg = ScorerConfig(source=ScorerSource.REMOTE, endpoint="http://127.0.0.1:9", retries=0)
    bundle = make_scorer_bundle(cfg, endpoint_override=url)
    image = noise_image()
    pair = bundle.score(image, UsabilityContext(conditioning=COND, baseline_image=image))
    assert (pair.aesthetic, pair.alignment) == (6.5, 7.0)


def test_local_config_ignores_endpoint():
    bundle = make_scorer_bundle(ScorerConfig(endpoint="http://127.0.0.1:9"))
    assert bundle.source == ScorerSource.LOCAL_PROXY


@pytest.mark.parametrize(
    "error, expected",
    [
        (requests.ConnectionError(), True),
        (ScorerUnavailableError("503"), True),
        (ScorerProtocolError("bad"), False),
        (ValueError(), False),
    ],
)
def test_is_transient_error(error, expected):
    assert is_transient_error(error) is expected


def test_mock_scorer_cli_options(monkeypatch):
    seen = {}
    monkeypatch.setattr(mock_scorer_script, "serve", lambda state, port: seen.update(state=state, port=port))
    result = CliRunner().invoke(
        mock_scorer_script.app,
        ["--port", "9100", "--aesthetic", "6", "--alignment", "7.5", "--blip", "0.4", "--fail-first", "2"],
    )
    assert result.exit_code == 0, result.output
    state = seen["state"]
    assert seen["port"] == 9100
    assert (state.aesthetic, state.alignment, state.blip, state.fail_first) == (6.0, 7.5, 0.4, 2)
