"""Flux aléatoires étiquetés, à compteur.

Tout l'aléa découle d'une graine entière. Chaque consommateur demande un flux
par une étiquette fixe (et un indice pour les flux par chaîne) ; ajouter un
consommateur ne décale jamais les tirages d'un autre.
"""

import zlib

import numpy as np

HERMITE_INPUTS = "hermite-inputs"
HERMITE_NOISE = "hermite-noise"
ISDE_VELOCITY = "isde-velocity"
ISDE_NOISE = "isde-noise"
HOLDOUT_SPLIT = "holdout-split"


def label_key(label: str) -> int:
    return zlib.crc32(label.encode("utf-8"))


def stream(seed: int, label: str, index: int = 0) -> np.random.Generator:
    """Générateur Philox indépendant pour ``(seed, label, index)``."""
    sequence = np.random.SeedSequence(int(seed), spawn_key=(label_key(label), int(index)))
    return np.random.Generator(np.random.Philox(sequence))
