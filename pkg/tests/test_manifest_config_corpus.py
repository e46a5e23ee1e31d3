import numpy as np
import pytest

from oodgate.config import PipelineConfig, load_config, save_config
from oodgate.corpus import generate_synthetic_corpus
from oodgate.errors import (
    BadLabelError,
    BadSplitError,
    DuplicatePathError,
    EmptyManifestError,
    MissingFileError,
    ValidationError,
)
from oodgate.features import extract_feature_vector
from oodgate.manifest import FeatureCache, load_image, load_manifest, worker_threads


def write(tmp_path, text, name="m.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_manifest_basic(tmp_path):
    m = load_manifest(write(tmp_path, "path,label,split\na.png,0,internal\nb.png,1,internal\n"))
    assert m.counts() == {("internal", 0): 1, ("internal", 1): 1}
    assert m.entries[0].path == tmp_path / "a.png"


@pytest.mark.parametrize(
    "text, err",
    [
        ("path,label,split\na.png,0,internal\na.png,1,internal\n", DuplicatePathError),
        ("path,label,split\na.png,fundus,internal\n", BadLabelError),
        ("path,label,split\na.png,2,internal\n", BadLabelError),
        ("path,label,split\na.png,1,test\n", BadSplitError),
        ("path,label,split\n", EmptyManifestError),
        ("file,label\na.png,1\n", ValidationError),
    ],
)
def test_manifest_errors(tmp_path, text, err):
    with pytest.raises(err):
        load_manifest(write(tmp_path, text))


def test_manifest_missing_file_on_eager_check(tmp_path):
    p = write(tmp_path, "path,label,split\nnope.png,1,external\n")
    load_manifest(p)
    with pytest.raises(MissingFileError):
        load_manifest(p, check_files=True)


def test_worker_threads_env(monkeypatch):
    monkeypatch.setenv("OODGATE_THREADS", "3")
    assert worker_threads() == 3
    monkeypatch.setenv("OODGATE_THREADS", "x")
    with pytest.raises(ValidationError):
        worker_threads()


def test_config_roundtrip(tmp_path):
    cfg = PipelineConfig(factor=4, seed=17, dark_threshold=30.5, class_weight="balanced", manifest="data/m.csv")
    save_config(cfg, tmp_path / "c.cfg")
    assert load_config(tmp_path / "c.cfg") == cfg
    assert PipelineConfig.from_text(PipelineConfig().to_text()) == PipelineConfig()


@pytest.mark.parametrize(
    "text",
    ["factor = 3\n", "dark_threshold = 300\n", "black_threshold = -1\n", "bogus = 1\n", "seed = abc\n",
     "class_weight = auto\n", "no equals sign\n", "schema_version = 2\n"],
)
def test_config_validation(text):
    with pytest.raises(ValidationError):
        PipelineConfig.from_text(text)


def test_config_comments_and_overrides():
    cfg = PipelineConfig.from_text("# comment\n\nfactor = 2\n")
    assert cfg.factor == 2
    assert cfg.with_overrides(factor=8, seed=None).factor == 8


def test_corpus_counts_and_determinism(tmp_path, tiny_corpus):
    out, manifest = tiny_corpus
    assert len(manifest) == 24
    assert manifest.counts() == {("internal", 0): 8, ("internal", 1): 8, ("external", 0): 4, ("external", 1): 4}
    assert load_manifest(out / "manifest.csv", check_files=True).counts() == manifest.counts()
    again = generate_synthetic_corpus(tmp_path / "again", 12, seed=7, image_format="pnm")
    for a, b in zip(manifest.entries, again.entries):
        assert a.path.name == b.path.name and a.split == b.split
        assert a.path.read_bytes() == b.path.read_bytes()


def test_png_corpus_n100(tmp_path):
    m = generate_synthetic_corpus(tmp_path, 100, seed=1, size=64)
    assert len(list(tmp_path.glob("*.png"))) == 200 and len(m) == 200
    assert sum(e.label for e in m.entries) == 100
    assert sum(e.split == "internal" for e in m.entries) == 140


def test_fundus_samples_look_like_fundus(tiny_corpus):
    _, manifest = tiny_corpus
    for e in manifest.entries:
        fv = extract_feature_vector(load_image(e.path), 2)
        if e.label == 1:
            assert fv["background_dark_flag"] == 1 and fv["circularity"] > 0.9
        else:
            assert fv["all_corners_dark_flag"] == 0


def test_feature_cache_reuses_and_prefetches(tiny_corpus):
    _, manifest = tiny_corpus
    paths = [e.path for e in manifest.entries[:4]]
    cache = FeatureCache(threads=2)
    cache.prefetch(paths, (4, 8))
    assert len(cache) == 8
    a = cache.matrix(paths, 8)
    assert len(cache) == 8
    direct = np.stack([extract_feature_vector(load_image(p), 8).values for p in paths])
    assert np.array_equal(a, direct)
    assert cache.get(paths[0], 8) is cache.get(paths[0], 8)
