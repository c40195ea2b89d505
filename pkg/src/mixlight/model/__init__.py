from .config import ModelConfig  # noqa: F401
from .network import HighlightNet, build_model  # noqa: F401
from .loss import mr_stft_loss, default_loss_windows  # noqa: F401
from .checkpoint import save_checkpoint, load_checkpoint  # noqa: F401
