"""
EvoSeed – ERR Cache
Signed on-disk cache of ERR-set collections for replaying a selection.
"""

import base64
import io
import json
import logging
from pathlib import Path
from typing import Optional

import numpy as np
from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes, hmac

from seed_selection import ERRCollection

logger = logging.getLogger(__name__)

CACHE_KEY = b"evoseed-err-cache-v1"
SIGNATURE_SUFFIX = ".sig"


class ErrCacheManager:
    def __init__(self, cache_dir: Path, key: bytes = CACHE_KEY):
        self.cache_dir = Path(cache_dir)
        self._key = key
        self.last_error = ""

    def path_for(self, name: str) -> Path:
        return self.cache_dir / f"{name}.npz"

    def _mac(self, payload: bytes) -> hmac.HMAC:
        mac = hmac.HMAC(self._key, hashes.SHA256())
        mac.update(payload)
        return mac

    def store(self, name: str, collection: ERRCollection) -> Path:
        """Write the collection as .npz plus a detached HMAC-SHA256 signature."""
        buffer = io.BytesIO()
        np.savez(buffer, **collection.to_arrays())
        payload = buffer.getvalue()

        path = self.path_for(name)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(payload)
        signature = base64.b64encode(self._mac(payload).finalize()).decode("ascii")
        meta = {"signature": signature, "sets": len(collection), "theta_prime": collection.theta_prime}
        with open(path.with_suffix(SIGNATURE_SUFFIX), "w", encoding="utf-8") as f:
            json.dump(meta, f, indent=2)
        logger.debug("cached %d ERR sets at %s", len(collection), path)
        return path

    def load(self, name: str) -> Optional[ERRCollection]:
        """
        Load and verify a cached collection.
        Returns None (with last_error set) when missing or tampered with.
        """
        path = self.path_for(name)
        sig_path = path.with_suffix(SIGNATURE_SUFFIX)
        if not path.exists() or not sig_path.exists():
            self.last_error = f"cache entry {name} not found"
            return None

        try:
            with open(sig_path, "r", encoding="utf-8") as f:
                meta = json.load(f)
            signature_b64 = meta.get("signature")
            if not signature_b64:
                self.last_error = f"signature missing for {name}"
                return None

            payload = path.read_bytes()
            self._mac(payload).verify(base64.b64decode(signature_b64))
            with np.load(io.BytesIO(payload)) as arrays:
                return ERRCollection.from_arrays({k: arrays[k] for k in arrays.files})

        except (json.JSONDecodeError, InvalidSignature, ValueError, KeyError) as e:
            self.last_error = f"verification failed for {name}: {e!r}"
            logger.warning("ERR cache %s rejected: %r", name, e)
            return None
