# Copyright (C) 2023 Rémy Cases
# See LICENSE file for extended copyright information.
# This file is part of LabelForge project.

import logging
import warnings
from dataclasses import dataclass
import numpy as np
from scipy.cluster.vq import kmeans2, vq, ClusterError
from .supervised import model_images
from ..core.classutils import Label, LabelSource
from ..core.rng import stream
from ..data.corpus import Dataset
from ..models.zoo import Model, predict_embeddings
from ..errors import ClusteringError, UsageError

logger = logging.getLogger(__name__)

N_CLUSTERS = 2
KMEANS_ITERATIONS = 50
MAX_ATTEMPTS = 5

def run_kmeans(embeddings: np.ndarray, seed: int) -> tuple[np.ndarray, np.ndarray, int]:
    '''
    Two-cluster k-means with k-means++ seeding.

    A run leaving a cluster empty is retried with fresh seeding.

    Returns
    -------
    tuple
        (centroids, assignment, attempts used)

    Raises
    ------
    ClusteringError
        If every attempt leaves a cluster empty.
    '''
    data = np.asarray(embeddings, dtype=np.float64)
    if len(data) < N_CLUSTERS:
        raise ClusteringError(f"Cannot form {N_CLUSTERS} clusters from {len(data)} embeddings.")
    for attempt in range(1, MAX_ATTEMPTS + 1):
        try:
            centroids, assignment = kmeans2(data, N_CLUSTERS, iter=KMEANS_ITERATIONS, minit="++",
                                            missing="raise", seed=stream(seed, "kmeans", attempt))
        except ClusterError:
            warnings.warn(f"k-means attempt {attempt} left a cluster empty, reseeding.")
            continue
        if len(np.unique(assignment)) == N_CLUSTERS:
            return centroids, assignment, attempt
        warnings.warn(f"k-means attempt {attempt} left a cluster empty, reseeding.")
    raise ClusteringError(f"k-means produced an empty cluster in {MAX_ATTEMPTS} attempts.")

def mapping_for(centroids: np.ndarray, anchor_embeddings: np.ndarray, anchor_labels: np.ndarray) -> np.ndarray:
    '''
    Class of each cluster, chosen to maximize agreement on the anchor set.

    The two clusters always map to distinct classes. On a tie the cluster whose
    centroid lies nearer the mean Malignant anchor embedding becomes Malignant.
    '''
    anchor_labels = np.asarray(anchor_labels, dtype=np.int64)
    assignment, _ = vq(np.asarray(anchor_embeddings, dtype=np.float64), centroids)
    direct = np.array([Label.Benign, Label.Malignant], dtype=np.int64)
    swapped = direct[::-1].copy()
    agree_direct = np.sum(direct[assignment] == anchor_labels)
    agree_swapped = np.sum(swapped[assignment] == anchor_labels)
    if agree_direct != agree_swapped:
        return direct if agree_direct > agree_swapped else swapped
    malignant_mean = np.mean(anchor_embeddings[anchor_labels == int(Label.Malignant)], axis=0)
    distances = np.linalg.norm(centroids - malignant_mean, axis=1)
    return direct if distances[1] < distances[0] else swapped

@dataclass
class ClusterLabeler:
    centroids: np.ndarray
    mapping: np.ndarray
    attempts: int = 1

    @classmethod
    def fit(cls, embeddings: np.ndarray, anchor_embeddings: np.ndarray, anchor_labels, seed: int = 0) -> "ClusterLabeler":
        anchor_labels = np.asarray(anchor_labels, dtype=np.int64)
        missing = [label.name for label in Label if not np.any(anchor_labels == int(label))]
        if missing:
            raise UsageError(f"The anchor set holds no {', '.join(missing)} sample.")
        centroids, _, attempts = run_kmeans(embeddings, seed)
        return cls(centroids=centroids, mapping=mapping_for(centroids, anchor_embeddings, anchor_labels),
                   attempts=attempts)

    def clusters(self, embeddings: np.ndarray) -> np.ndarray:
        return vq(np.asarray(embeddings, dtype=np.float64), self.centroids)[0]

    def predict(self, embeddings: np.ndarray) -> np.ndarray:
        return self.mapping[self.clusters(embeddings)]

def embed(encoder: Model, dataset: Dataset) -> np.ndarray:
    return predict_embeddings(encoder, model_images(encoder, dataset))

def cluster_label(encoder: Model, unlabeled: Dataset, anchors: Dataset, seed: int = 0) -> Dataset:
    '''
    Label every unlabeled sample by its k-means cluster in projection space.

    Parameters
    ----------
    encoder : Model
        Contrastively pretrained model with a projection head.
    unlabeled : Dataset
    anchors : Dataset
        Labeled samples used only to name the two clusters; needs both classes.
    seed : int

    Returns
    -------
    Dataset
        Same samples and order, label_source cluster.
    '''
    if len(unlabeled) == 0:
        return Dataset((), unlabeled.name)
    labeler = ClusterLabeler.fit(embed(encoder, unlabeled), embed(encoder, anchors), anchors.assigned_labels(), seed)
    labels = labeler.predict(embed(encoder, unlabeled))
    relabeled = Dataset([s.relabel(Label(int(y)), LabelSource.Cluster) for s, y in zip(unlabeled, labels)],
                        unlabeled.name)
    counts = relabeled.counts()
    logger.info("Cluster-labeled %d samples (B: %d, M: %d) after %d k-means attempt(s)", len(relabeled),
                counts[Label.Benign], counts[Label.Malignant], labeler.attempts)
    return relabeled
