import hashlib
import logging
import os
import threading
from typing import Dict, Optional

logger = logging.getLogger(__name__)


class FStarCache:
    """
    Reference optima keyed by problem identity.

    Values live in memory and, when a directory is given, in `<digest>.fstar`
    files beside the training data (one value at 17 significant digits).
    """

    def __init__(self, directory: Optional[str] = None):
        self.directory = directory
        self._memory: Dict[str, float] = {}
        self._lock = threading.Lock()

    @staticmethod
    def digest(key: str) -> str:
        return hashlib.sha256(key.encode("utf-8")).hexdigest()

    def path_for(self, key: str) -> Optional[str]:
        if self.directory is None:
            return None
        return os.path.join(self.directory, f"{self.digest(key)}.fstar")

    def get(self, key: str) -> Optional[float]:
        with self._lock:
            if key in self._memory:
                return self._memory[key]
        path = self.path_for(key)
        if path is None or not os.path.exists(path):
            return None
        try:
            with open(path, "r") as f:
                value = float(f.read().strip())
        except (OSError, ValueError) as e:
            logger.warning("ignoring unreadable F* cache file %s: %s", path, e)
            return None
        with self._lock:
            self._memory[key] = value
        return value

    def put(self, key: str, value: float):
        with self._lock:
            self._memory[key] = value
        path = self.path_for(key)
        if path is None:
            return
        try:
            with open(path, "w") as f:
                f.write(f"{value:.17g}\n")
            logger.debug("cached F* = %.17g in %s", value, path)
        except OSError as e:
            logger.warning("could not write F* cache file %s: %s", path, e)
