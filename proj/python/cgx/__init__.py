"""Causal generative explainers for image classifiers.

Thin Python face over the C++ core (`_cgx`): synthetic Morpho-MNIST-style
data, attribute SCMs with abduction/intervention, conditional generative
models (variational and adversarial), pixel/attribute Shapley explainers,
counterfactual searches, and the IM1/IM2/oracle evaluation metrics.
"""

from _cgx import (  # noqa: F401
    AttributeScm,
    Cgm,
    Classifier,
    Normalizer,
    __version__,
    agnostic_cf,
    attribute_shapley,
    baseline_pixel_cf,
    contrastive_explain,
    expected_embedding,
    generate_dataset,
    gradient_cf,
    im1,
    im2,
    interpolated_embedding,
    load_cgm,
    load_dataset,
    mc_attribute_scores,
    mean_ci,
    morphometrics,
    oracle_score,
    render_glyph,
    save_npy,
    set_num_threads,
    shapley_saliency,
    spearman,
    train_bigan,
    train_classifier,
    train_vae,
)
