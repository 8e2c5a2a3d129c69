#!/usr/bin/env python3
"""
Prédiction de réponses VQA (classification multi-étiquettes).
"""

from typing import Optional, Sequence

import numpy as np

from src.autodiff.ops import sigmoid
from src.autodiff.tensor import Tensor, no_grad
from src.data.scene import QAPair, SceneExample
from src.inference.decoding import Prediction
from src.model.weights import ModelWeights
from src.training.objectives import vqa_forward
from src.utils.errors import ConfigError


def vqa_predict(scene: SceneExample, question_ids: Sequence[int], weights: ModelWeights,
                topk: int = 5, answers: Optional[Sequence[str]] = None) -> Prediction:
    """Classe les réponses par score sigmoïde et retourne les k premières.

    Args:
        scene (SceneExample): Scène
        question_ids (Sequence[int]): Question tokenisée (sans remplissage)
        weights (ModelWeights): Poids fine-tunés
        topk (int): Nombre de réponses retournées
        answers (Sequence[str], optional): Vocabulaire de réponses (identifiants sinon)

    Returns:
        Prediction: Réponses classées, scores dans (0, 1)
    """
    k = weights.config.n_answers
    if answers is not None and len(answers) != k:
        raise ConfigError(f"{len(answers)} réponses fournies, la tête en prédit {k}")
    item = (scene, QAPair(question=list(question_ids), answer="", answer_id=-1, soft_label=[0.0] * k))
    with no_grad():
        logits = vqa_forward([item], weights).data[0]
        scores = sigmoid(Tensor(logits)).data
    order = np.argsort(-logits, kind="stable")[:max(1, topk)]
    labels = [answers[i] if answers is not None else str(i) for i in order]
    return Prediction(
        answers=[(label, float(scores[i])) for label, i in zip(labels, order)],
        answer_ids=[int(i) for i in order],
        score=float(scores[order[0]]),
    )
