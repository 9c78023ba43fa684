from toonflow.toydata.captions import VOCAB_SIZE, WORDS, detokenize, scene_caption, tokenize
from toonflow.toydata.dataset import (
    BenchmarkSample,
    ClipSample,
    build_benchmark,
    clip_sample,
    is_validation_index,
    read_manifest,
    train_indices,
    val_indices,
    write_manifest,
)
from toonflow.toydata.scenes import (
    BACKGROUND_KINDS,
    COLOR_VALUES,
    SHAPE_KINDS,
    TRAJECTORY_KINDS,
    SceneSpec,
    ShapeSpec,
    caption_of,
    make_scene,
    render_clip,
    shape_position,
    turn_frame,
)
from toonflow.toydata.sketches import STYLE_TAGS, SketchStyle, extract_sketch, style_named
