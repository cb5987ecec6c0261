"""Training loop: synthetic corpus, on-the-fly token codebooks, Adam with a
halve-on-plateau schedule, per-step CSV logging, self-describing checkpoints.

Disabled cues keep their heads but contribute no loss term, their fusion
branch modules are never constructed, and their attention logits are masked,
so the remaining branches renormalize through the softmax.
"""

import csv
import os
from dataclasses import dataclass

import numpy as np
import torch

from . import data
from .config import RunConfig
from .losses import LossWeights, total_loss
from .metrics import run_eval, CLEAN
from .model import SpeakerExtractor
from .tokens import Codebook, build_codebooks, extract_frame_feats, tokenize


@dataclass
class TrainResult:
    checkpoint_path: str
    log_path: str
    final_loss: float
    train_sisnri_db: float


def set_determinism(seed, deterministic):
    torch.manual_seed(seed)
    if deterministic:
        torch.set_num_threads(1)
        torch.use_deterministic_algorithms(True)


def loss_weights_for(cfg: RunConfig) -> LossWeights:
    return LossWeights(
        sisnr=cfg.w_sisnr,
        stft=cfg.w_stft,
        speaker=cfg.w_spk if "speaker" in cfg.cues else 0.0,
        acoustic=cfg.w_acoustic if "acoustic" in cfg.cues else 0.0,
        semantic=cfg.w_semantic if "semantic" in cfg.cues else 0.0,
    )


def build_training_set(cfg: RunConfig):
    specs = data.corpus_specs(cfg.num_samples, cfg.seed, cfg.num_speakers,
                              cfg.duration_s, (cfg.snr_low, cfg.snr_high))
    samples = [data.realize(s) for s in specs]
    codebooks = build_codebooks([s.target for s in samples],
                                cfg.acoustic_clusters, cfg.semantic_clusters,
                                seed=cfg.seed)
    speakers = sorted({s.speaker_id for s in samples})
    speaker_index = {sid: i for i, sid in enumerate(speakers)}
    batches = []
    for s in samples:
        batches.append({
            "mixture": torch.as_tensor(s.mixture, dtype=torch.float32),
            "reference": torch.as_tensor(s.target, dtype=torch.float32),
            "video": torch.as_tensor(s.video, dtype=torch.float32),
            "speaker": speaker_index[s.speaker_id],
            "acoustic_tokens": torch.as_tensor(
                tokenize(extract_frame_feats(s.target, "acoustic"),
                         codebooks["acoustic"])),
            "semantic_tokens": torch.as_tensor(
                tokenize(extract_frame_feats(s.target, "semantic"),
                         codebooks["semantic"])),
        })
    return samples, batches, codebooks, speakers


def _stack(batch, key):
    return torch.stack([item[key] for item in batch])


def run_train(cfg: RunConfig, out_dir, stop_sisnri_db=None,
              eval_every=200) -> TrainResult:
    """Train on the synthetic corpus. When `stop_sisnri_db` is set, training
    halts early once the training-set SI-SNRi reaches that value (checked
    every `eval_every` steps)."""
    os.makedirs(out_dir, exist_ok=True)
    set_determinism(cfg.seed, cfg.deterministic)
    rng = np.random.default_rng(cfg.seed)

    samples, items, codebooks, speakers = build_training_set(cfg)
    model = SpeakerExtractor.from_config(cfg)
    weights = loss_weights_for(cfg)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    scheduler = torch.optim.lr_scheduler.ReduceLROnPlateau(
        optimizer, factor=cfg.plateau_factor, patience=cfg.plateau_patience)
    steps_per_epoch = max(1, int(np.ceil(len(items) / cfg.batch_size)))

    def train_sisnri():
        model.eval()
        report = run_eval(model, samples, [(CLEAN, 0.0)], seed=cfg.seed)
        model.train()
        return report.mean("sisnri_db")

    log_path = os.path.join(out_dir, "train_log.csv")
    epoch_losses = []
    last_total = float("nan")
    with open(log_path, "w", newline="") as logf:
        log = csv.writer(logf)
        log.writerow(["step", "total", "sisnr", "stft", "speaker", "acoustic",
                      "semantic", "lr"])
        for step in range(cfg.steps):
            if len(items) <= cfg.batch_size:
                batch = items
            else:
                idx = rng.choice(len(items), size=cfg.batch_size,
                                 replace=False)
                batch = [items[i] for i in sorted(idx)]
            out = model(_stack(batch, "mixture"), _stack(batch, "video"))
            outputs = {
                "estimate": out.estimate,
                "speaker_logits": out.speaker_logits,
                "acoustic_logits": out.acoustic_logits,
                "semantic_logits": out.semantic_logits,
            }
            targets = {
                "reference": _stack(batch, "reference"),
                "speaker": torch.as_tensor([b["speaker"] for b in batch]),
                "acoustic_tokens": _stack(batch, "acoustic_tokens"),
                "semantic_tokens": _stack(batch, "semantic_tokens"),
            }
            loss, terms = total_loss(outputs, targets, weights)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()

            last_total = float(loss)
            epoch_losses.append(last_total)
            lr_now = optimizer.param_groups[0]["lr"]
            log.writerow([step, f"{last_total:.6f}",
                          f"{terms['sisnr']:.6f}", f"{terms['stft']:.6f}",
                          f"{terms['speaker']:.6f}",
                          f"{terms['acoustic']:.6f}",
                          f"{terms['semantic']:.6f}", f"{lr_now:.8f}"])
            if (step + 1) % steps_per_epoch == 0:
                scheduler.step(float(np.mean(epoch_losses)))
                epoch_losses = []
            if (stop_sisnri_db is not None and (step + 1) % eval_every == 0
                    and train_sisnri() >= stop_sisnri_db):
                break

    checkpoint_path = os.path.join(out_dir, "checkpoint.pt")
    save_checkpoint(checkpoint_path, model, cfg, codebooks, speakers)

    model.eval()
    return TrainResult(checkpoint_path=checkpoint_path, log_path=log_path,
                       final_loss=last_total, train_sisnri_db=train_sisnri())


def save_checkpoint(path, model, cfg: RunConfig, codebooks, speakers):
    torch.save({
        "config": cfg.to_dict(),
        "model_state": model.state_dict(),
        "codebooks": {name: {"centroids": cb.centroids, "seed": cb.seed}
                      for name, cb in codebooks.items()},
        "speakers": list(speakers),
    }, path)


def load_checkpoint(path):
    payload = torch.load(path, map_location="cpu", weights_only=False)
    cfg = RunConfig.from_dict(payload["config"])
    model = SpeakerExtractor.from_config(cfg)
    model.load_state_dict(payload["model_state"])
    model.eval()
    codebooks = {name: Codebook(centroids=np.asarray(d["centroids"]),
                                seed=d["seed"])
                 for name, d in payload["codebooks"].items()}
    return model, cfg, codebooks, payload["speakers"]
