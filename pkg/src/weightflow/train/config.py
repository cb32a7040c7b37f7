from __future__ import annotations

from dataclasses import asdict, dataclass, field

from ..errors import ConfigError
from ..hyperflow import SolverConfig


@dataclass
class TrainConfig:
    """Hyper-parameters of both training stages.

    ``lam`` weights the path energy; ``sigma`` is the diffusion constant of
    the optional score term (0 disables it).
    """

    anchor_epochs: int = 2000
    anchor_lr: float = 5e-3
    hypernet_epochs: int = 3000
    hypernet_lr: float = 1e-3
    lam: float = 0.01
    sigma: float = 0.0
    score_samples: int = 64
    batch_size: int = 0            # 0 = full batch
    seed: int = 0
    sequential_aligning: bool = True
    mode: str = "cde"              # "cde" or "ode"
    m: int = 1
    ae_epochs: int = 2000
    ae_lr: float = 3e-3
    ae_hidden: int = 32
    d_model: int = 32
    heads: int = 4
    d_time: int = 8
    d_ff: int = 64
    lr_schedule: str = "cosine"    # "constant" or "cosine" (decays to lr_floor * lr)
    lr_floor: float = 0.01
    grad_clip: float = 1.0         # global-norm clip for the hypernetwork; 0 disables
    normalize_field: bool = True   # standardize hypernet inputs/outputs by anchor statistics
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if isinstance(self.solver, dict):
            self.solver = SolverConfig(**self.solver)
        if self.lam < 0:
            raise ConfigError("lam must be >= 0")
        if self.sigma < 0:
            raise ConfigError("sigma must be >= 0")
        for name in ("anchor_epochs", "hypernet_epochs", "ae_epochs"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.anchor_lr <= 0 or self.hypernet_lr <= 0 or self.ae_lr <= 0:
            raise ConfigError("learning rates must be positive")
        if self.mode not in ("cde", "ode"):
            raise ConfigError(f"mode must be 'cde' or 'ode', got {self.mode!r}")
        if self.m < 1:
            raise ConfigError("m must be >= 1")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ConfigError(f"lr_schedule must be 'constant' or 'cosine', got {self.lr_schedule!r}")
        if not 0 < self.lr_floor <= 1:
            raise ConfigError("lr_floor must be in (0, 1]")
        if self.grad_clip < 0:
            raise ConfigError("grad_clip must be >= 0")
        if self.batch_size < 0:
            raise ConfigError("batch_size must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)
