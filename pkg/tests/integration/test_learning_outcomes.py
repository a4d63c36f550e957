"""
Integration tests for what training learns on strongly separated synthetic pools
"""

import json
from pathlib import Path

import pytest
import torch

from promptlight.config import (BackboneConfig, EnhancerConfig, PathsConfig,
                                PromptConfig, RunConfig)
from promptlight.core.entities import LossWeights, Stage, TrainConfig
from promptlight.core.enhancer import enhance
from promptlight.core.metrics import psnr
from promptlight.core.prompting import score_images, y_hat
from promptlight.core.services import TrainingService
from promptlight.infrastructure.image_store import UnpairedDataset
from tests.conftest import TINY_MODEL, write_images

CROP = 64


def pools(root: Path, count: int = 16):
    write_images(root / "backlit", count, brightness=0.1, size=(80, 96), seed=21, prefix="dark")
    write_images(root / "welllit", count, brightness=0.75, size=(80, 96), seed=22, prefix="bright")
    return UnpairedDataset.from_dirs(str(root / "backlit"), str(root / "welllit"))


def desk_config(root: Path, enhancer: EnhancerConfig = None, **train) -> RunConfig:
    settings = {
        "total_iters": 1600,
        "prompt_init_iters": 600,
        "self_recon_iters": 100,
        "stage_cap": 150,
        "refinement_rounds": 3,
        "lr_prompt": 2e-3,
        "lr_net": 5e-3,
        "batch_prompt": 8,
        "batch_net": 8,
        "resize_size": CROP,
        "crop_size": CROP,
        "thr_A": -1.0,
        "thr_B": -1.0,
        "loss_weights": LossWeights(w=0.1),
        "similarity_temperature": 0.5,
        "checkpoint_every": 100000,
        "log_every": 100000,
    }
    settings.update(train)
    return RunConfig(
        seed=11,
        device="cpu",
        paths=PathsConfig(
            backlit_dir=str(root / "backlit"),
            welllit_dir=str(root / "welllit"),
            out_dir=str(root / "run"),
        ),
        backbone=BackboneConfig(model_name=TINY_MODEL, pretrained=None),
        prompts=PromptConfig(n_tokens=8),
        enhancer=enhancer or EnhancerConfig(depth=2, base_channels=8, init_bias=2.0),
        train=TrainConfig(**settings),
    )


def stack(pool, size: int = CROP) -> torch.Tensor:
    return torch.stack([pool.resized(image_id, size) for image_id in pool.ids])


def mean_score(service: TrainingService, images: torch.Tensor) -> float:
    with torch.no_grad():
        scores = score_images(
            service.backend, service.prompts, images, service.train.similarity_temperature
        )
    return float(scores.mean())


def outputs(service: TrainingService, images: torch.Tensor) -> torch.Tensor:
    with torch.no_grad():
        return enhance(service.net, images)


@pytest.fixture(scope="module")
def refined(tiny_backend, tmp_path_factory):
    """Three refinement rounds, ending on a prompt refinement stage."""
    root = tmp_path_factory.mktemp("refined")
    dataset = pools(root)
    service = TrainingService(desk_config(root), tiny_backend, dataset)
    service.run()
    return service


@pytest.mark.integration
@pytest.mark.slow
class TestPromptInitialization:
    """Test that prompt initialization separates the two pools."""

    def test_accuracy_on_pools(self, tiny_backend, tmp_path):
        """Test that y_hat above 0.5 marks exactly the well-lit images."""
        dataset = pools(tmp_path)
        config = desk_config(
            tmp_path,
            total_iters=2002,
            prompt_init_iters=2000,
            self_recon_iters=1,
            stage_cap=1,
            refinement_rounds=0,
        )
        service = TrainingService(config, tiny_backend, dataset)
        service.run_stage1()
        backlit = stack(dataset.backlit)
        welllit = stack(dataset.welllit)
        temperature = config.train.similarity_temperature
        with torch.no_grad():
            negative_emb, positive_emb = service.prompts.text_embeddings(tiny_backend)
            y_backlit = y_hat(tiny_backend.encode_image(backlit), negative_emb, positive_emb, temperature)
            y_welllit = y_hat(tiny_backend.encode_image(welllit), negative_emb, positive_emb, temperature)
        correct = int((y_backlit <= 0.5).sum()) + int((y_welllit > 0.5).sum())
        assert correct >= 30
        assert mean_score(service, backlit) > mean_score(service, welllit)


@pytest.mark.integration
@pytest.mark.slow
class TestSelfReconstruction:
    """Test that self-reconstruction pulls a non-identity enhancer onto its input."""

    def test_reaches_identity(self, tiny_backend, tmp_path):
        """Test PSNR against the input before and after self-reconstruction."""
        dataset = pools(tmp_path)
        config = desk_config(
            tmp_path,
            enhancer=EnhancerConfig(depth=2, base_channels=8, init_bias=1.0),
            total_iters=1002,
            prompt_init_iters=0,
            self_recon_iters=1000,
            stage_cap=2,
            refinement_rounds=0,
        )
        service = TrainingService(config, tiny_backend, dataset)
        images = stack(dataset.backlit)
        measured = {}

        def hook(event, stage, svc):
            if stage == Stage.SELF_RECON:
                measured[event] = psnr(outputs(svc, images), images)

        service.phase_hooks.append(hook)
        service.run_stage1()
        assert service.state.stage_totals["self_recon"] == 1000
        assert measured["stage_start"] < 30.0
        assert measured["stage_end"] > 35.0


@pytest.mark.integration
@pytest.mark.slow
class TestRefinementOutcomes:
    """Test the score ordering and direction after several refinement rounds."""

    def test_schedule_ends_on_refinement(self, refined):
        """Test the round count and the final stage."""
        assert refined.state.round_t == 3
        assert refined.state.stage == Stage.PROMPT_REFINE
        assert refined.state.iteration == 1600

    def test_score_ordering(self, refined):
        """Test S(well-lit) < S(enhanced) < S(backlit) on the training pools."""
        backlit = stack(refined.dataset.backlit)
        s_w = mean_score(refined, stack(refined.dataset.welllit))
        s_b = mean_score(refined, backlit)
        s_t = mean_score(refined, outputs(refined, backlit))
        assert s_w < s_t < s_b

    def test_enhancement_lowers_score(self, refined):
        """Test that the enhancer moves backlit images toward the well-lit prompt."""
        backlit = stack(refined.dataset.backlit)
        assert mean_score(refined, outputs(refined, backlit)) < mean_score(refined, backlit) - 0.1

    def test_rounds_do_not_regress(self, refined):
        """Test that current outputs score no higher than the previous round's."""
        records = [
            r
            for r in map(json.loads, refined.run_log.metrics_path.read_text().splitlines())
            if r["stage"] == "prompt_refine" and r.get("mean_s_previous") is not None
        ]
        assert {r["round_t"] for r in records} == {2, 3}
        for round_t in (2, 3):
            rows = [r for r in records if r["round_t"] == round_t]
            current = sum(r["mean_s_current"] for r in rows) / len(rows)
            previous = sum(r["mean_s_previous"] for r in rows) / len(rows)
            assert current <= previous + 0.05

    def test_refinement_beats_stage1_only(self, refined, tiny_backend, tmp_path):
        """Test that ranking refinement is no worse than stopping after stage 1."""
        dataset = pools(tmp_path)
        config = desk_config(tmp_path, refinement_rounds=0)
        stage1_only = TrainingService(config, tiny_backend, dataset)
        stage1_only.run()
        assert stage1_only.state.round_t == 0

        backlit = stack(dataset.backlit)
        assert torch.equal(backlit, stack(refined.dataset.backlit))
        with_refinement = mean_score(refined, outputs(refined, backlit))
        without = mean_score(refined, outputs(stage1_only, backlit))
        assert with_refinement <= without
