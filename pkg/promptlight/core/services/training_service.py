"""
Two-stage alternating optimization of the prompt pair and the enhancer
"""

import copy
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import torch
from tqdm import tqdm

from ... import __version__
from ...config import RunConfig, config_hash
from ...exceptions import (CheckpointMismatchError, StateError,
                           TrainingDivergedError)
from ...infrastructure.checkpoints import (KIND_TRAINING, FORMAT_VERSION,
                                           enhancer_payload, export_prompt_text,
                                           prompt_payload, read_blob,
                                           save_enhancer, save_prompts,
                                           write_blob)
from ...infrastructure.image_store import (UnpairedDataset, augment, draw_ids,
                                           training_sample)
from ...infrastructure.output_cache import CURRENT, PREVIOUS, OutputCache
from ...infrastructure.run_log import RunLog
from ...utils.logging import get_logger
from ...utils.seeding import (restore_rng_state, rng_state, sample_generator,
                              set_seed)
from ..enhancer import EnhancerNet, enhance
from ..entities import (CheckpointRecord, IdentityPhase, IdentityWeights,
                        PoolKind, RunManifest, Stage, TrainState)
from ..interfaces import VisionLanguageBackend
from ..losses import enhance_loss, self_reconstruction_loss
from ..prompting import (PromptPair, init_prompts, initial_loss,
                         refine_loss_round1, refine_loss_round2, score_s, y_hat)

logger = get_logger(__name__)

PhaseHook = Callable[[str, Stage, "TrainingService"], None]

STAGE1_ORDER = (Stage.PROMPT_INIT, Stage.SELF_RECON, Stage.ENHANCE_INITIAL)
CACHE_MISS_RETRIES = 8


class TrainingService:
    """
    Owns every piece of mutable training state.

    Stage 1: prompt initialization, self-reconstruction, initial enhancement.
    Stage 2: rounds of prompt refinement and enhancement fine-tuning; each round
    starts by caching the frozen network's outputs over the backlit pool.
    Every stage draws from one global iteration budget.
    """

    def __init__(
        self,
        config: RunConfig,
        backend: VisionLanguageBackend,
        dataset: UnpairedDataset,
        out_dir: Optional[str] = None,
        checkpoint_dir: Optional[str] = None,
        show_progress: bool = False,
    ):
        self.config = config
        self.train = config.train
        self.backend = backend
        self.dataset = dataset
        self.out_dir = Path(out_dir or config.paths.out_dir)
        self.checkpoint_dir = Path(checkpoint_dir or config.paths.resolved_checkpoint_dir())
        self.show_progress = show_progress

        self.config_hash = config_hash(config)
        self.run_log = RunLog(str(self.out_dir), append=True)
        self.cache = OutputCache(str(self.out_dir / "cache"))
        self.state = TrainState(seed=self.train.seed)
        self.phase_hooks: List[PhaseHook] = []
        self.cache_misses = 0
        # enhancer weights that produced each cache slot, keyed by slot
        self.cache_sources: Dict[str, dict] = {}

        set_seed(self.train.seed)
        self.prompts: PromptPair = init_prompts(
            backend, config.prompts.init(), config.prompts.n_tokens, seed=self.train.seed
        )
        torch.manual_seed(self.train.seed)
        self.net = EnhancerNet(config.enhancer).to(device=backend.device, dtype=backend.dtype)

        betas = (self.train.adam_beta1, self.train.adam_beta2)
        self.prompt_optimizer = torch.optim.Adam(
            self.prompts.parameters(), lr=self.train.lr_prompt, betas=betas
        )
        self.net_optimizer = torch.optim.Adam(
            self.net.parameters(), lr=self.train.lr_net, betas=betas
        )

        self.fingerprint = backend.fingerprint()
        self.manifest = RunManifest(
            command="train",
            code_version=__version__,
            seed=self.train.seed,
            config=config.model_dump(mode="json"),
            config_hash=self.config_hash,
            backbone=backend.describe(),
            decisions=self._decisions(),
            warnings=self._warnings(),
        )
        self._progress: Optional[tqdm] = None

    # ------------------------------------------------------------------
    # bookkeeping

    def _decisions(self) -> dict:
        return {
            "thr_A": self.train.thr_A,
            "thr_B": self.train.thr_B,
            "threshold_window": self.train.threshold_window,
            "threshold_reduction": "windowed mean of batch-mean losses",
            "similarity_temperature": self.train.similarity_temperature,
            "logit_scale_applied": False,
            "first_round_loss": "three-hinge ranking",
            "later_round_loss": (
                "four-hinge ranking with previous-round cache"
                if self.train.use_previous_outputs
                else "three-hinge ranking"
            ),
            "cache_on_resume": "rebuilt from the enhancer weights stored per slot",
            "prompt_refinement": "resumes from the current prompt pair",
            "refinement_rounds": self.train.refinement_rounds,
            "budget": "all stages count against total_iters",
            "cache_resolution": self.train.crop_size,
            "inference_resize": "long side 2048 when both sides exceed 2048",
            "ssim": "luma, 11x11 gaussian, valid windows",
        }

    def _warnings(self) -> dict:
        return {
            "skipped_backlit": list(self.dataset.backlit.skipped),
            "skipped_welllit": list(self.dataset.welllit.skipped),
            "icc_ignored": list(self.dataset.backlit.icc_ignored)
            + list(self.dataset.welllit.icc_ignored),
            "truncated_phrases": dict(self.prompts.truncated),
            "cache_misses": self.cache_misses,
        }

    @property
    def remaining(self) -> int:
        return max(0, self.train.total_iters - self.state.iteration)

    @property
    def stage1_complete(self) -> bool:
        return (
            self.state.stage is not None
            and self.state.stage not in (Stage.PROMPT_INIT, Stage.SELF_RECON)
            and (self.state.stage != Stage.ENHANCE_INITIAL or self.state.stage_complete)
        )

    def _emit(self, event: str) -> None:
        for hook in self.phase_hooks:
            hook(event, self.state.stage, self)

    def _apply_freeze(self, stage: Stage) -> None:
        if stage.trains_prompts:
            self.prompts.unfreeze()
            self.net.requires_grad_(False)
        else:
            self.prompts.freeze()
            self.net.requires_grad_(True)

    def _threshold(self, stage: Stage) -> Optional[float]:
        if stage == Stage.PROMPT_REFINE:
            return self.train.thr_A
        if stage in (Stage.ENHANCE_INITIAL, Stage.ENHANCE_TUNE):
            return self.train.thr_B
        return None

    def _stage_budget(self, stage: Stage) -> int:
        if stage == Stage.PROMPT_INIT:
            budget = self.train.prompt_init_iters
        elif stage == Stage.SELF_RECON:
            budget = self.train.self_recon_iters
        else:
            budget = self.train.stage_cap
        return min(budget, self.remaining)

    def _enter_stage(self, stage: Stage) -> None:
        if stage == Stage.PROMPT_REFINE:
            self._begin_round()
        self.state.stage = stage
        self.state.stage_iteration = 0
        self.state.stage_budget = self._stage_budget(stage)
        self.state.stage_complete = False
        self.state.recent_losses = []
        self._apply_freeze(stage)
        logger.info(
            f"Entering {stage.value} (round {self.state.round_t}, "
            f"budget {self.state.stage_budget}, iteration {self.state.iteration})"
        )
        self._emit("stage_start")

    def _stage_finished(self) -> bool:
        state = self.state
        if state.stage_iteration >= state.stage_budget or self.remaining == 0:
            return True
        threshold = self._threshold(state.stage)
        if threshold is None or len(state.recent_losses) < self.train.threshold_window:
            return False
        window_mean = sum(state.recent_losses) / len(state.recent_losses)
        if window_mean < threshold:
            logger.info(
                f"{state.stage.value}: windowed loss {window_mean:.4f} below "
                f"threshold {threshold:.4f}, alternating"
            )
            return True
        return False

    def _next_stage(self) -> Optional[Stage]:
        stage = self.state.stage
        if stage is None:
            return Stage.PROMPT_INIT
        if stage in STAGE1_ORDER[:-1]:
            return STAGE1_ORDER[STAGE1_ORDER.index(stage) + 1]
        if stage == Stage.PROMPT_REFINE:
            return Stage.ENHANCE_TUNE
        rounds = self.train.refinement_rounds
        if rounds is not None and self.state.round_t >= rounds:
            return None
        return Stage.PROMPT_REFINE

    # ------------------------------------------------------------------
    # batches

    def _to_device(self, images: List[torch.Tensor]) -> torch.Tensor:
        return torch.stack(images).to(device=self.backend.device, dtype=self.backend.dtype)

    def _samples(self, kind: PoolKind, count: int, stage: Stage) -> torch.Tensor:
        pool = self.dataset.pool(kind)
        iteration = self.state.iteration
        stream = f"{stage.value}:{kind.value}"
        ids = draw_ids(pool, self.train.seed, f"ids:{stream}", iteration, count)
        return self._to_device(
            [
                training_sample(
                    pool,
                    image_id,
                    self.train.seed,
                    iteration * count + k,
                    crop_size=self.train.crop_size,
                    resize_size=self.train.resize_size,
                    zoom_range=self.train.zoom_range,
                    flip_prob=self.train.flip_prob,
                    stream=f"augment:{stream}",
                )
                for k, image_id in enumerate(ids)
            ]
        )

    def _cached_ids(self, count: int) -> List[str]:
        """Draw backlit ids, resampling any without a cached output"""
        pool = self.dataset.backlit
        cached = self.cache.ids(CURRENT)
        if not cached:
            raise StateError("Output cache is empty", stage=Stage.PROMPT_REFINE.value)
        ids = []
        iteration = self.state.iteration
        for attempt in range(CACHE_MISS_RETRIES):
            stream = "ids:prompt_refine" if attempt == 0 else f"ids:prompt_refine:retry{attempt}"
            for image_id in draw_ids(pool, self.train.seed, stream, iteration, count):
                if image_id in cached:
                    ids.append(image_id)
                else:
                    self.cache_misses += 1
                    logger.warning(f"No cached output for {image_id}, resampling")
            if len(ids) >= count:
                return ids[:count]
        fallback = sorted(cached)
        while len(ids) < count:
            ids.append(fallback[len(ids) % len(fallback)])
        return ids

    # ------------------------------------------------------------------
    # rounds and caching

    def _begin_round(self) -> None:
        """Rotate the cache, then store I_t of the now-frozen network"""
        self.cache.rotate()
        if self.cache.round_of(PREVIOUS) is not None:
            self.state.cache_rounds[PREVIOUS] = self.cache.round_of(PREVIOUS)
        self.cache_sources.pop(PREVIOUS, None)
        if CURRENT in self.cache_sources:
            self.cache_sources[PREVIOUS] = self.cache_sources.pop(CURRENT)
        self.state.round_t += 1
        self._fill_slot(CURRENT, self.net, self.state.round_t)
        self.cache_sources[CURRENT] = {
            "round": self.state.round_t,
            "state_dict": {k: v.detach().cpu().clone() for k, v in self.net.state_dict().items()},
        }
        self.state.cache_rounds[CURRENT] = self.state.round_t
        logger.info(
            f"Round {self.state.round_t}: cached {len(self.dataset.backlit)} enhanced outputs"
        )

    def _fill_slot(self, slot: str, net: EnhancerNet, round_t: int) -> None:
        """Write net's enhancement of every backlit image into a cache slot"""
        was_training = net.training
        net.eval()
        with torch.no_grad():
            for image_id in self.dataset.backlit.ids:
                image = self.dataset.backlit.resized(image_id, self.train.crop_size)
                batch = image.unsqueeze(0).to(device=self.backend.device, dtype=self.backend.dtype)
                self.cache.write(slot, image_id, enhance(net, batch)[0])
        net.train(was_training)
        self.cache.mark_round(slot, round_t)

    def _rebuild_cache(self, sources: Dict[str, dict]) -> None:
        """Regenerate cache slots from the enhancer weights that produced them"""
        self.cache.clear()
        self.cache_sources = {}
        for slot in (PREVIOUS, CURRENT):
            source = sources.get(slot)
            if source is None:
                continue
            net = copy.deepcopy(self.net)
            net.load_state_dict(source["state_dict"])
            self._fill_slot(slot, net, source["round"])
            self.cache_sources[slot] = source
            logger.info(f"Rebuilt {slot} output cache for round {source['round']}")

    def _uses_previous(self) -> bool:
        return self.train.use_previous_outputs and self.state.round_t >= 2

    def _check_cache_discipline(self) -> None:
        t = self.state.round_t
        if self.state.cache_rounds.get(CURRENT) != t or self.cache.round_of(CURRENT) != t:
            raise StateError(
                f"Current output cache does not belong to round {t}",
                stage=Stage.PROMPT_REFINE.value,
            )
        if self._uses_previous() and (
            self.state.cache_rounds.get(PREVIOUS) != t - 1
            or self.cache.round_of(PREVIOUS) != t - 1
        ):
            raise StateError(
                f"Previous output cache does not belong to round {t - 1}",
                stage=Stage.PROMPT_REFINE.value,
            )

    # ------------------------------------------------------------------
    # steps

    def _prompt_init_loss(self) -> Tuple[torch.Tensor, dict]:
        n_welllit = self.train.batch_prompt // 2
        n_backlit = self.train.batch_prompt - n_welllit
        parts = [self._samples(PoolKind.BACKLIT, n_backlit, Stage.PROMPT_INIT)]
        if n_welllit:
            parts.append(self._samples(PoolKind.WELLLIT, n_welllit, Stage.PROMPT_INIT))
        images = torch.cat(parts)
        labels = torch.cat(
            [torch.zeros(n_backlit), torch.ones(n_welllit)]
        ).to(device=self.backend.device, dtype=self.backend.dtype)
        with torch.no_grad():
            image_emb = self.backend.encode_image(images)
        negative_emb, positive_emb = self.prompts.text_embeddings(self.backend)
        scores = y_hat(image_emb, negative_emb, positive_emb, self.train.similarity_temperature)
        loss = initial_loss(scores, labels)
        accuracy = float(((scores > 0.5).to(labels.dtype) == labels).to(torch.float64).mean())
        return loss, {"loss_initial": float(loss.detach()), "accuracy": accuracy}

    def _refine_loss(self) -> Tuple[torch.Tensor, dict]:
        self._check_cache_discipline()
        count = self.train.batch_prompt
        iteration = self.state.iteration
        ids = self._cached_ids(count)

        backlit, current, previous = [], [], []
        for k, image_id in enumerate(ids):
            index = iteration * count + k
            views = [self.dataset.backlit.resized(image_id, self.train.crop_size)]
            views.append(self.cache.read(CURRENT, image_id))
            if self._uses_previous():
                cached = self.cache.read(PREVIOUS, image_id)
                if cached is None:
                    raise StateError(
                        f"No previous-round output for {image_id}",
                        stage=Stage.PROMPT_REFINE.value,
                    )
                views.append(cached)
            # one generator per view keeps the three crops aligned
            augmented = [
                augment(
                    view.float(),
                    sample_generator(self.train.seed, "augment:prompt_refine", index),
                    self.train.crop_size,
                    self.train.zoom_range,
                    self.train.flip_prob,
                )
                for view in views
            ]
            backlit.append(augmented[0])
            current.append(augmented[1])
            if len(augmented) > 2:
                previous.append(augmented[2])

        welllit = self._samples(PoolKind.WELLLIT, count, Stage.PROMPT_REFINE)
        temperature = self.train.similarity_temperature
        negative_emb, positive_emb = self.prompts.text_embeddings(self.backend)

        def scores(images: torch.Tensor) -> torch.Tensor:
            with torch.no_grad():
                image_emb = self.backend.encode_image(images)
            return score_s(image_emb, negative_emb, positive_emb, temperature)

        s_w = scores(welllit)
        s_b = scores(self._to_device(backlit))
        s_t = scores(self._to_device(current))
        if self._uses_previous():
            s_tm1 = scores(self._to_device(previous))
            loss = refine_loss_round2(s_w, s_b, s_t, s_tm1, self.train.margins)
        else:
            loss = refine_loss_round1(s_w, s_b, s_t, self.train.margins)
            s_tm1 = None
        record = {
            "loss_refine": float(loss.detach()),
            "mean_s_welllit": float(s_w.detach().mean()),
            "mean_s_backlit": float(s_b.detach().mean()),
            "mean_s_current": float(s_t.detach().mean()),
        }
        if s_tm1 is not None:
            record["mean_s_previous"] = float(s_tm1.detach().mean())
        return loss, record

    def _net_loss(self, stage: Stage) -> Tuple[torch.Tensor, dict]:
        images = self._samples(PoolKind.BACKLIT, self.train.batch_net, stage)
        enhanced = enhance(self.net, images)
        if stage == Stage.SELF_RECON:
            terms = self_reconstruction_loss(
                self.backend,
                images,
                enhanced,
                IdentityWeights.for_phase(IdentityPhase.SELF_RECONSTRUCTION),
            )
        else:
            terms = enhance_loss(
                self.backend,
                images,
                enhanced,
                self.prompts,
                self.train.loss_weights,
                IdentityWeights.for_phase(IdentityPhase.ENHANCEMENT),
                self.train.similarity_temperature,
            )
        return terms.total, terms.as_record()

    def _step(self) -> None:
        stage = self.state.stage
        if stage == Stage.PROMPT_INIT:
            loss, record = self._prompt_init_loss()
        elif stage == Stage.PROMPT_REFINE:
            loss, record = self._refine_loss()
        else:
            loss, record = self._net_loss(stage)

        if not torch.isfinite(loss):
            dump_path = self.dump_state("diverged")
            raise TrainingDivergedError(
                f"Non-finite loss in {stage.value}",
                dump_path=dump_path,
                iteration=self.state.iteration,
            )

        optimizer = self.prompt_optimizer if stage.trains_prompts else self.net_optimizer
        optimizer.zero_grad(set_to_none=True)
        loss.backward()
        optimizer.step()

        value = float(loss.detach())
        self.state.recent_losses = (self.state.recent_losses + [value])[
            -self.train.threshold_window :
        ]
        self.state.count_iteration()
        self.run_log.record(self.state.iteration, stage.value, self.state.round_t, **record)

        if self._progress is not None:
            self._progress.update(1)
        if self.state.iteration % self.train.log_every == 0:
            logger.info(
                f"iter {self.state.iteration} {stage.value} round {self.state.round_t} "
                f"loss {value:.5f}"
            )
        if self.state.iteration % self.train.checkpoint_every == 0:
            self.checkpoint()

    def _run_current_stage(self) -> None:
        while not self._stage_finished():
            self._step()
        self.state.stage_complete = True
        self._emit("stage_end")

    def _advance(self) -> bool:
        """Run (or finish) one stage; False once nothing is left to do"""
        if self.state.finished:
            return False
        if self.state.stage is not None and not self.state.stage_complete:
            self._apply_freeze(self.state.stage)
            self._run_current_stage()
            return True
        next_stage = self._next_stage()
        if next_stage is None or (self.remaining == 0 and next_stage not in STAGE1_ORDER):
            self.state.finished = True
            return False
        self._enter_stage(next_stage)
        self._run_current_stage()
        return True

    # ------------------------------------------------------------------
    # public operations

    def run_stage1(self) -> Tuple[PromptPair, EnhancerNet, TrainState]:
        """Prompt initialization, self-reconstruction and initial enhancement"""
        if self.train.total_iters == 0:
            logger.info("total_iters is 0, nothing to train")
            self.state.finished = True
            return self.prompts, self.net, self.state
        with self._progress_bar():
            while not self.stage1_complete and self._advance():
                pass
        return self.prompts, self.net, self.state

    def run_stage2(self) -> Tuple[PromptPair, EnhancerNet, TrainState]:
        """Alternate prompt refinement and enhancement tuning until the budget is spent"""
        if self.state.finished:
            return self.prompts, self.net, self.state
        if not self.stage1_complete:
            stage = self.state.stage.value if self.state.stage else None
            raise StateError("Stage 1 has not completed", stage=stage)
        with self._progress_bar():
            while self._advance():
                pass
        return self.prompts, self.net, self.state

    def run(self) -> CheckpointRecord:
        """Full training; returns the final checkpoint record"""
        if self.state.iteration == 0:
            self.run_log.truncate_after(0)
            self.cache.clear()
        self.run_log.write_manifest(self.manifest)
        self.run_stage1()
        self.run_stage2()
        self.state.finished = True
        record = self.checkpoint()
        self._verify_backbone_frozen()
        self.run_log.write_manifest(self.manifest)
        logger.info(
            f"Training finished after {self.state.iteration} iterations, "
            f"{self.state.round_t} refinement rounds"
        )
        return record

    def _verify_backbone_frozen(self) -> None:
        final = self.backend.fingerprint()
        self.manifest.final_fingerprint = final
        if final != self.fingerprint:
            raise StateError("Backbone weights changed during training")

    def _progress_bar(self):
        self._progress = tqdm(
            total=self.train.total_iters,
            initial=self.state.iteration,
            disable=not self.show_progress,
            desc="train",
        )
        return self._progress

    # ------------------------------------------------------------------
    # checkpoints

    def training_payload(self) -> dict:
        backbone = self.backend.describe().model_dump()
        return {
            "kind": KIND_TRAINING,
            "version": FORMAT_VERSION,
            "state": self.state.model_dump(mode="json"),
            "config": self.config.model_dump(mode="json"),
            "config_hash": self.config_hash,
            "fingerprint": self.fingerprint,
            "prompts": prompt_payload(self.prompts, self.state.iteration, backbone),
            "enhancer": enhancer_payload(self.net, self.state.round_t, self.state.iteration),
            "optimizers": {
                "prompt": self.prompt_optimizer.state_dict(),
                "net": self.net_optimizer.state_dict(),
            },
            "cache_sources": self.cache_sources,
            "rng": rng_state(),
        }

    def checkpoint(self) -> CheckpointRecord:
        """Write training, prompt and enhancer checkpoints and update the manifest"""
        iteration = self.state.iteration
        stem = f"{iteration:07d}"
        directory = self.checkpoint_dir
        training_path = write_blob(self.training_payload(), str(directory / f"training_{stem}.pt"))
        prompt_path = save_prompts(
            self.prompts,
            str(directory / f"prompts_{stem}.pt"),
            iteration,
            self.backend.describe().model_dump(),
        )
        prompt_text_path = export_prompt_text(self.prompts, str(directory / f"prompts_{stem}.txt"))
        enhancer_path = save_enhancer(
            self.net, str(directory / f"enhancer_{stem}.pt"), self.state.round_t, iteration
        )
        record = CheckpointRecord(
            iteration=iteration,
            stage=self.state.stage.value if self.state.stage else None,
            round_t=self.state.round_t,
            training_path=training_path,
            prompt_path=prompt_path,
            enhancer_path=enhancer_path,
            prompt_text_path=prompt_text_path,
            config_hash=self.config_hash,
            weight_fingerprint=self.fingerprint,
        )
        self.manifest.checkpoints = [
            r for r in self.manifest.checkpoints if r.iteration != iteration
        ] + [record]
        self.manifest.warnings = self._warnings()
        self.run_log.write_manifest(self.manifest)
        logger.info(f"Checkpoint written at iteration {iteration}: {training_path}")
        return record

    def dump_state(self, reason: str) -> str:
        path = self.out_dir / f"{reason}_state_{self.state.iteration:07d}.pt"
        return write_blob(self.training_payload(), str(path))

    def resume(self, path: str) -> TrainState:
        """Restore everything a training checkpoint holds"""
        payload = read_blob(path)
        if payload.get("kind") != KIND_TRAINING:
            raise CheckpointMismatchError(
                "Not a training checkpoint",
                path=path,
                expected=KIND_TRAINING,
                actual=payload.get("kind"),
            )
        if payload["config_hash"] != self.config_hash:
            raise CheckpointMismatchError(
                "Checkpoint was written under a different config",
                path=path,
                expected=self.config_hash,
                actual=payload["config_hash"],
            )
        if payload["fingerprint"] != self.fingerprint:
            raise CheckpointMismatchError(
                "Checkpoint was written against different backbone weights",
                path=path,
                expected=self.fingerprint,
                actual=payload["fingerprint"],
            )

        with torch.no_grad():
            self.prompts.negative.copy_(payload["prompts"]["negative"])
            self.prompts.positive.copy_(payload["prompts"]["positive"])
        self.net.load_state_dict(payload["enhancer"]["state_dict"])
        self.prompt_optimizer.load_state_dict(payload["optimizers"]["prompt"])
        self.net_optimizer.load_state_dict(payload["optimizers"]["net"])
        self.state = TrainState(**payload["state"])
        self._rebuild_cache(payload.get("cache_sources", {}))
        restore_rng_state(payload["rng"])
        if self.state.stage is not None:
            self._apply_freeze(self.state.stage)
        self.run_log.truncate_after(self.state.iteration)
        logger.info(f"Resumed from {path} at iteration {self.state.iteration}")
        return self.state
