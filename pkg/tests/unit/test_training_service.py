"""
Unit tests for the two-stage training service
"""

import json
import shutil
from pathlib import Path

import pytest
import torch

from promptlight.config import PromptConfig
from promptlight.core.entities import InitMode, Stage
from promptlight.core.enhancer import enhance
from promptlight.core.metrics import psnr
from promptlight.core.services import TrainingService
from promptlight.exceptions import (EXIT_DIVERGED, CheckpointMismatchError,
                                    StateError, TrainingDivergedError)
from promptlight.infrastructure.checkpoints import load_enhancer, read_blob
from promptlight.infrastructure.image_store import UnpairedDataset
from promptlight.infrastructure.output_cache import CURRENT, PREVIOUS


@pytest.fixture
def dataset(tiny_config):
    """Both training pools of the tiny config."""
    return UnpairedDataset.from_dirs(
        tiny_config.paths.backlit_dir, tiny_config.paths.welllit_dir
    )


@pytest.fixture
def make_service(tiny_backend, dataset):
    """Factory for services over the tiny backbone."""

    def factory(config, out_dir=None):
        return TrainingService(config, tiny_backend, dataset, out_dir=out_dir)

    return factory


def with_train(config, **changes):
    """Copy of a run config with some training fields replaced."""
    return config.model_copy(update={"train": config.train.model_copy(update=changes)})


def read_metrics(out_dir) -> list:
    path = Path(out_dir) / "metrics.jsonl"
    return [json.loads(line) for line in path.read_text().splitlines()]


@pytest.mark.unit
class TestBudget:
    """Test iteration accounting."""

    def test_zero_budget_is_a_no_op(self, tiny_config, make_service):
        """Test total_iters = 0."""
        config = with_train(tiny_config, total_iters=0)
        service = make_service(config)
        record = service.run()
        assert service.state.iteration == 0
        assert service.state.finished
        assert service.state.round_t == 0
        assert not (Path(config.paths.out_dir) / "metrics.jsonl").exists()
        assert Path(record.training_path).exists()

    def test_full_schedule(self, tiny_config, make_service):
        """Test stage totals and the round count of the tiny schedule."""
        service = make_service(tiny_config)
        service.run()
        assert service.state.iteration == 24
        assert service.state.round_t == 3
        assert service.state.stage_totals == {
            "prompt_init": 4,
            "self_recon": 2,
            "enhance_initial": 3,
            "prompt_refine": 9,
            "enhance_tune": 6,
        }
        records = read_metrics(tiny_config.paths.out_dir)
        assert [r["iter"] for r in records] == list(range(1, 25))
        assert records[0]["stage"] == "prompt_init" and "loss_initial" in records[0]
        assert records[-1]["stage"] == "prompt_refine" and records[-1]["round_t"] == 3

    def test_refinement_rounds_zero(self, tiny_config, make_service):
        """Test stopping right after stage 1."""
        service = make_service(with_train(tiny_config, refinement_rounds=0))
        service.run()
        assert service.state.iteration == 9
        assert service.state.round_t == 0

    def test_refinement_rounds_limit(self, tiny_config, make_service):
        """Test a round limit below what the budget allows."""
        service = make_service(with_train(tiny_config, refinement_rounds=1))
        service.run()
        assert service.state.round_t == 1
        assert service.state.iteration == 15

    def test_threshold_ends_stages_early(self, tiny_config, make_service):
        """Test that a reachable threshold shortens alternation stages."""
        config = with_train(tiny_config, thr_A=1e6, thr_B=1e6, threshold_window=1)
        service = make_service(config)
        service.run()
        totals = service.state.stage_totals
        assert totals["enhance_initial"] == 1
        assert totals["prompt_init"] == 4 and totals["self_recon"] == 2
        assert service.state.iteration == 24
        assert service.state.round_t > 3


@pytest.mark.unit
class TestAblations:
    """Test the reduced training recipes."""

    def test_without_previous_outputs(self, tiny_config, make_service):
        """Test that later rounds keep the three-hinge loss and need no previous cache."""
        service = make_service(with_train(tiny_config, use_previous_outputs=False))

        def hook(event, stage, svc):
            if event == "stage_start" and stage == Stage.PROMPT_REFINE:
                shutil.rmtree(svc.cache.root / PREVIOUS, ignore_errors=True)

        service.phase_hooks.append(hook)
        service.run()
        assert service.state.round_t == 3
        refine = [r for r in read_metrics(tiny_config.paths.out_dir) if r["stage"] == "prompt_refine"]
        assert {r["round_t"] for r in refine} == {1, 2, 3}
        assert all("mean_s_previous" not in r for r in refine)
        assert service.manifest.decisions["later_round_loss"] == "three-hinge ranking"

    def test_previous_outputs_required_by_default(self, tiny_config, make_service):
        """Test that a missing previous cache stops round 2 of the default recipe."""
        service = make_service(tiny_config)

        def hook(event, stage, svc):
            if event == "stage_start" and stage == Stage.PROMPT_REFINE:
                shutil.rmtree(svc.cache.root / PREVIOUS, ignore_errors=True)

        service.phase_hooks.append(hook)
        with pytest.raises(StateError):
            service.run()
        assert service.state.round_t == 2

    def test_fixed_prompts(self, tiny_config, make_service):
        """Test that skipping prompt training keeps the word-seeded pair as initialized."""
        config = with_train(tiny_config, prompt_init_iters=0, refinement_rounds=0)
        config = config.model_copy(
            update={
                "prompts": PromptConfig(
                    n_tokens=4,
                    init_mode=InitMode.WORD_SEEDED,
                    negative_phrase="backlit",
                    positive_phrase="well-lit",
                )
            }
        )
        service = make_service(config)
        initial = [p.detach().clone() for p in service.prompts.parameters()]
        service.run()
        assert service.state.iteration == 5
        assert service.state.round_t == 0
        assert service.state.stage_totals.get("prompt_init", 0) == 0
        for before, after in zip(initial, service.prompts.parameters()):
            assert torch.equal(before, after)
        stages = {r["stage"] for r in read_metrics(config.paths.out_dir)}
        assert stages == {"self_recon", "enhance_initial"}


@pytest.mark.unit
class TestStageOrder:
    """Test alternation and freezing."""

    def test_stage2_requires_stage1(self, tiny_config, make_service):
        """Test calling stage 2 first."""
        with pytest.raises(StateError):
            make_service(tiny_config).run_stage2()

    def test_round_bookkeeping(self, tiny_config, make_service):
        """Test stage order and round numbers seen by phase hooks."""
        service = make_service(tiny_config)
        starts = []
        service.phase_hooks.append(
            lambda event, stage, svc: starts.append((stage, svc.state.round_t))
            if event == "stage_start"
            else None
        )
        service.run()
        assert starts == [
            (Stage.PROMPT_INIT, 0),
            (Stage.SELF_RECON, 0),
            (Stage.ENHANCE_INITIAL, 0),
            (Stage.PROMPT_REFINE, 1),
            (Stage.ENHANCE_TUNE, 1),
            (Stage.PROMPT_REFINE, 2),
            (Stage.ENHANCE_TUNE, 2),
            (Stage.PROMPT_REFINE, 3),
        ]

    def test_only_one_side_moves(self, tiny_config, make_service):
        """Test that each stage leaves the other side's weights untouched."""
        service = make_service(tiny_config)
        snapshots = {}
        violations = []

        def hook(event, stage, svc):
            if event == "stage_start":
                snapshots["net"] = [p.detach().clone() for p in svc.net.parameters()]
                snapshots["prompts"] = [p.detach().clone() for p in svc.prompts.parameters()]
                if stage.trains_prompts:
                    if any(p.requires_grad for p in svc.net.parameters()):
                        violations.append(f"{stage.value}: net trainable")
                elif any(p.requires_grad for p in svc.prompts.parameters()):
                    violations.append(f"{stage.value}: prompts trainable")
                return
            frozen = "net" if stage.trains_prompts else "prompts"
            params = svc.net.parameters() if frozen == "net" else svc.prompts.parameters()
            if not all(torch.equal(a, b) for a, b in zip(snapshots[frozen], params)):
                violations.append(f"{stage.value}: {frozen} changed")

        service.phase_hooks.append(hook)
        service.run()
        assert violations == []

    def test_backbone_stays_frozen(self, tiny_config, make_service, tiny_backend):
        """Test the recorded fingerprints."""
        service = make_service(tiny_config)
        service.run()
        assert service.manifest.final_fingerprint == tiny_backend.fingerprint()


@pytest.mark.unit
class TestCaches:
    """Test the per-round output caches."""

    def test_cache_discipline(self, tiny_config, make_service):
        """Test that each refinement stage sees caches of the right rounds."""
        service = make_service(tiny_config)
        seen = []

        def hook(event, stage, svc):
            if event == "stage_start" and stage == Stage.PROMPT_REFINE:
                seen.append((svc.state.round_t, svc.cache.round_of(CURRENT), svc.cache.round_of(PREVIOUS)))

        service.phase_hooks.append(hook)
        service.run()
        assert seen == [(1, 1, None), (2, 2, 1), (3, 3, 2)]
        assert len(service.cache.ids(CURRENT)) == len(service.dataset.backlit)

    def test_foreign_cache_is_refused(self, tiny_config, make_service):
        """Test that a cache from another round stops refinement."""
        service = make_service(tiny_config)

        def hook(event, stage, svc):
            if event == "stage_start" and stage == Stage.PROMPT_REFINE:
                svc.cache.mark_round(CURRENT, 99)

        service.phase_hooks.append(hook)
        with pytest.raises(StateError):
            service.run()

    def test_cached_outputs_match_network(self, tiny_config, make_service):
        """Test that the current cache holds the frozen network's outputs."""
        service = make_service(with_train(tiny_config, refinement_rounds=1))
        captured = {}

        def hook(event, stage, svc):
            if event == "stage_start" and stage == Stage.PROMPT_REFINE:
                image_id = svc.dataset.backlit.ids[0]
                image = svc.dataset.backlit.resized(image_id, svc.train.crop_size)
                with torch.no_grad():
                    captured["expected"] = enhance(svc.net, image.unsqueeze(0))[0]
                captured["cached"] = svc.cache.read(CURRENT, image_id)

        service.phase_hooks.append(hook)
        service.run()
        assert torch.allclose(captured["cached"], captured["expected"], atol=1e-6)


@pytest.mark.unit
class TestStage1Quality:
    """Test what stage 1 leaves behind."""

    def test_stage1_stays_close_to_identity(self, tiny_config, make_service):
        """Test that self-reconstruction keeps the output near its input."""
        service = make_service(tiny_config)
        service.run_stage1()
        assert service.stage1_complete
        assert service.state.iteration == 9
        image = service.dataset.backlit.image(service.dataset.backlit.ids[0])
        with torch.no_grad():
            out = enhance(service.net, image)
        assert psnr(out, image) > 35.0


@pytest.mark.unit
class TestCheckpointsAndResume:
    """Test checkpoint files and exact resumption."""

    def test_checkpoint_files(self, tiny_config, make_service):
        """Test the files and manifest entry of the final checkpoint."""
        service = make_service(tiny_config)
        record = service.run()
        directory = Path(tiny_config.paths.resolved_checkpoint_dir())
        for name in ("training", "prompts", "enhancer"):
            assert (directory / f"{name}_0000024.pt").exists()
        assert (directory / "prompts_0000024.txt").exists()
        assert record.round_t == 3
        manifest = json.loads((Path(tiny_config.paths.out_dir) / "manifest.json").read_text())
        assert [c["iteration"] for c in manifest["checkpoints"]] == [24]
        assert manifest["decisions"]["thr_A"] == -1.0
        net = load_enhancer(record.enhancer_path, tiny_config.enhancer)
        for a, b in zip(net.state_dict().values(), service.net.state_dict().values()):
            assert torch.equal(a, b)

    def test_resume_reproduces_metrics(self, tiny_config, make_service):
        """Test that resuming mid stage 1 gives byte-identical metrics."""
        config = with_train(tiny_config, checkpoint_every=5)
        first = make_service(config)
        first.run()
        out_dir = Path(config.paths.out_dir)
        full_metrics = (out_dir / "metrics.jsonl").read_bytes()
        final_weights = read_blob(
            str(Path(config.paths.resolved_checkpoint_dir()) / "enhancer_0000024.pt")
        )["state_dict"]

        second = make_service(config)
        state = second.resume(
            str(Path(config.paths.resolved_checkpoint_dir()) / "training_0000005.pt")
        )
        assert state.iteration == 5 and state.stage == Stage.SELF_RECON
        assert len((out_dir / "metrics.jsonl").read_text().splitlines()) == 5
        second.run()

        assert (out_dir / "metrics.jsonl").read_bytes() == full_metrics
        for key, value in second.net.state_dict().items():
            assert torch.equal(value, final_weights[key])

    @pytest.mark.parametrize(
        "iteration, stage",
        [(10, Stage.PROMPT_REFINE), (20, Stage.ENHANCE_TUNE)],
    )
    def test_resume_in_stage2_reproduces_metrics(
        self, tiny_config, make_service, iteration, stage
    ):
        """Test resuming inside a refinement round rebuilds its output caches."""
        config = with_train(tiny_config, checkpoint_every=10)
        first = make_service(config)
        first.run()
        out_dir = Path(config.paths.out_dir)
        checkpoint_dir = Path(config.paths.resolved_checkpoint_dir())
        full_metrics = (out_dir / "metrics.jsonl").read_bytes()
        final_weights = read_blob(str(checkpoint_dir / "enhancer_0000024.pt"))["state_dict"]

        second = make_service(config)
        state = second.resume(str(checkpoint_dir / f"training_{iteration:07d}.pt"))
        assert state.iteration == iteration and state.stage == stage
        assert second.cache.round_of(CURRENT) == state.round_t
        if state.round_t >= 2:
            assert second.cache.round_of(PREVIOUS) == state.round_t - 1
        second.run()

        assert (out_dir / "metrics.jsonl").read_bytes() == full_metrics
        for key, value in second.net.state_dict().items():
            assert torch.equal(value, final_weights[key])

    def test_resume_rebuilds_cache_contents(self, tiny_config, make_service):
        """Test that rebuilt cache slots equal the ones the run wrote."""
        config = with_train(tiny_config, checkpoint_every=20)
        first = make_service(config)
        written = {}

        def hook(event, stage, svc):
            if event == "stage_start" and stage == Stage.ENHANCE_TUNE and svc.state.round_t == 2:
                for slot in (CURRENT, PREVIOUS):
                    written[slot] = {
                        image_id: svc.cache.read(slot, image_id)
                        for image_id in svc.dataset.backlit.ids
                    }

        first.phase_hooks.append(hook)
        first.run()

        second = make_service(config)
        second.resume(
            str(Path(config.paths.resolved_checkpoint_dir()) / "training_0000020.pt")
        )
        for slot, images in written.items():
            for image_id, image in images.items():
                assert torch.equal(second.cache.read(slot, image_id), image)

    def test_resume_rejects_other_config(self, tiny_config, make_service):
        """Test a checkpoint written under a different config."""
        record = make_service(with_train(tiny_config, total_iters=12)).run()
        other = make_service(tiny_config)
        with pytest.raises(CheckpointMismatchError):
            other.resume(record.training_path)

    def test_resume_rejects_prompt_blob(self, tiny_config, make_service):
        """Test resuming from a prompt checkpoint."""
        service = make_service(with_train(tiny_config, total_iters=12))
        record = service.run()
        with pytest.raises(CheckpointMismatchError):
            service.resume(record.prompt_path)


@pytest.mark.unit
class TestDivergence:
    """Test the non-finite loss path."""

    def test_nan_loss_dumps_state(self, tiny_config, make_service):
        """Test that a NaN loss stops training with a state dump."""
        service = make_service(tiny_config)
        nan = torch.tensor(float("nan"), requires_grad=True)
        service._prompt_init_loss = lambda: (nan, {"loss_initial": float("nan")})
        with pytest.raises(TrainingDivergedError) as exc_info:
            service.run()
        assert exc_info.value.exit_code == EXIT_DIVERGED
        dump = Path(exc_info.value.dump_path)
        assert dump.exists() and dump.name == "diverged_state_0000000.pt"
        assert read_blob(str(dump))["state"]["iteration"] == 0
