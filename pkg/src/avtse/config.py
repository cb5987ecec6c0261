"""Run configuration: presets, cue toggles, and flat key=value config files."""

from dataclasses import dataclass, field, fields, asdict

CUE_NAMES = ("speaker", "acoustic", "semantic")
# CLI spellings accepted for --cues
CUE_ALIASES = {"spk": "speaker", "speaker": "speaker",
               "acoustic": "acoustic", "semantic": "semantic"}


@dataclass
class RunConfig:
    preset: str = "fast"
    # model geometry
    enc_dim: int = 256
    hidden_dim: int = 128
    chunk_len: int = 64
    enc_kernel: int = 40
    enc_stride: int = 20
    num_blocks: int = 5
    # data
    sample_rate: int = 16000
    fps: int = 25
    duration_s: float = 2.0
    num_samples: int = 8
    num_speakers: int = 8
    snr_low: float = -5.0
    snr_high: float = 5.0
    # cues / fusion
    visual_channels: tuple = (16, 32, 64)
    cues: tuple = CUE_NAMES
    fusion: str = "interaction"
    # token supervision
    acoustic_clusters: int = 512
    semantic_clusters: int = 48
    # optimization
    lr: float = 0.001
    batch_size: int = 8
    steps: int = 2000
    plateau_patience: int = 10
    plateau_factor: float = 0.5
    seed: int = 0
    deterministic: bool = False
    # loss weights
    w_sisnr: float = 1.0
    w_stft: float = 0.5
    w_spk: float = 0.1
    w_acoustic: float = 0.1
    w_semantic: float = 0.1

    def __post_init__(self):
        self.cues = tuple(self.cues)
        self.visual_channels = tuple(self.visual_channels)
        if self.fusion not in ("interaction", "concat"):
            raise ValueError(f"unknown fusion mode {self.fusion!r}")

    def to_dict(self):
        d = asdict(self)
        d["cues"] = list(self.cues)
        d["visual_channels"] = list(self.visual_channels)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for name in ("cues", "visual_channels"):
            if name in d:
                d[name] = tuple(d[name])
        return cls(**d)


PRESETS = {
    "fast": dict(num_blocks=5),
    "full": dict(num_blocks=10),
    "toy": dict(enc_dim=64, hidden_dim=32, chunk_len=16, enc_kernel=160,
                enc_stride=80, num_blocks=2, acoustic_clusters=64,
                num_speakers=4, visual_channels=(4, 8, 16)),
}


def make_config(preset="fast", **overrides) -> RunConfig:
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    params = dict(PRESETS[preset])
    params["preset"] = preset
    params.update(overrides)
    return RunConfig(**params)


def parse_cues(text):
    """Parse a --cues string like 'spk,acoustic,semantic' or 'none'."""
    text = text.strip().lower()
    if text in ("", "none"):
        return ()
    names = []
    for part in text.split(","):
        part = part.strip()
        if part not in CUE_ALIASES:
            raise ValueError(f"unknown cue {part!r}; choose from spk,acoustic,semantic")
        name = CUE_ALIASES[part]
        if name not in names:
            names.append(name)
    return tuple(n for n in CUE_NAMES if n in names)


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _parse_value(name, raw):
    kind = _FIELD_TYPES.get(name)
    if kind is None:
        raise KeyError(f"unknown config key {name!r}")
    raw = raw.strip()
    if name == "cues":
        return parse_cues(raw)
    if name == "visual_channels":
        return tuple(int(v) for v in raw.split(","))
    if kind == "bool" or kind is bool:
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"bad boolean for {name}: {raw!r}")
    if kind == "int" or kind is int:
        return int(raw)
    if kind == "float" or kind is float:
        return float(raw)
    return raw


def parse_config_file(path):
    """Flat key=value file; '#' starts a comment, blank lines ignored."""
    overrides = {}
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, raw = line.split("=", 1)
            overrides[key.strip()] = _parse_value(key.strip(), raw)
    return overrides


def write_config_file(cfg: RunConfig, path):
    with open(path, "w") as f:
        for name, value in cfg.to_dict().items():
            if name == "cues":
                value = ",".join(value) if value else "none"
            elif name == "visual_channels":
                value = ",".join(str(v) for v in value)
            f.write(f"{name}={value}\n")
