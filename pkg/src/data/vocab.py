#!/usr/bin/env python3
"""
Vocabulaire fermé et tokenisation par espaces.
"""

from dataclasses import dataclass
from typing import Dict, Iterable, List, Sequence

from src.utils.logger import get_logger

logger = get_logger(__name__)

CLS, SEP, STOP, MASK, PAD, UNK = "[CLS]", "[SEP]", "[STOP]", "[MASK]", "[PAD]", "[UNK]"
RESERVED = [CLS, SEP, STOP, MASK, PAD, UNK]
CLS_ID, SEP_ID, STOP_ID, MASK_ID, PAD_ID, UNK_ID = range(len(RESERVED))


class Vocab:
    """Table bijective token <-> identifiant ; les identifiants 0..5 sont réservés."""

    def __init__(self, words: Iterable[str]):
        self.id_to_token: List[str] = list(RESERVED)
        self.token_to_id: Dict[str, int] = {tok: i for i, tok in enumerate(RESERVED)}
        for word in words:
            word = word.lower()
            if word not in self.token_to_id:
                self.token_to_id[word] = len(self.id_to_token)
                self.id_to_token.append(word)

    def __len__(self) -> int:
        return len(self.id_to_token)

    def encode(self, token: str) -> int:
        return self.token_to_id.get(token.lower(), UNK_ID)

    def decode(self, token_id: int) -> str:
        return self.id_to_token[token_id]

    @property
    def regular_ids(self) -> range:
        """Identifiants non réservés (tirage des remplacements aléatoires)."""
        return range(len(RESERVED), len(self.id_to_token))

    def to_list(self) -> List[str]:
        return list(self.id_to_token[len(RESERVED):])

    @classmethod
    def from_list(cls, words: Sequence[str]) -> "Vocab":
        return cls(words)


@dataclass
class TokenizedText:
    """Séquence de longueur T et longueur réelle avant remplissage."""

    ids: List[int]
    length: int


def tokenize(text: str, vocab: Vocab, T: int) -> TokenizedText:
    """Tokenise un texte en minuscules, tronque à T et complète avec [PAD].

    Args:
        text (str): Texte à tokeniser
        vocab (Vocab): Vocabulaire ([UNK] pour les mots inconnus)
        T (int): Longueur cible

    Returns:
        TokenizedText: Identifiants de longueur T et longueur réelle
    """
    if T < 1:
        raise ValueError(f"T doit être >= 1, reçu {T}")
    words = text.lower().split()
    if not words:
        logger.warning("Texte vide : séquence entièrement remplie de [PAD]")
    ids = [vocab.encode(w) for w in words[:T]]
    length = len(ids)
    return TokenizedText(ids + [PAD_ID] * (T - length), length)


def detokenize(ids: Sequence[int], vocab: Vocab) -> str:
    """Reconstruit le texte jusqu'au premier [STOP] ou [PAD], sans tokens réservés."""
    words = []
    for token_id in ids:
        token_id = int(token_id)
        if token_id in (STOP_ID, PAD_ID):
            break
        if token_id >= len(RESERVED):
            words.append(vocab.decode(token_id))
    return " ".join(words)


def text_slots(caption_ids: Sequence[int], T: int) -> List[int]:
    """Construit les T+1 emplacements texte : mots, [STOP], puis [PAD]."""
    words = [int(i) for i in caption_ids if int(i) != PAD_ID][:T]
    return words + [STOP_ID] + [PAD_ID] * (T - len(words))
