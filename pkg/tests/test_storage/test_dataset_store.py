"""Tests for the dataset directory store"""
import numpy as np
import pytest

from exceptions import DatasetIOError, InputError
from models.camera import DepthImage
from services.render import read_label_pgm
from storage.dataset_store import MANIFEST_NAME, DatasetStore, open_dataset_for, read_manifest


@pytest.fixture
def store(tmp_path):
    dataset = DatasetStore(tmp_path / "dataset")
    dataset.connect(create=True)
    yield dataset
    dataset.close()


class TestConnection:
    """Tests for opening and closing a dataset"""

    def test_missing_directory_raises_error(self, tmp_path):
        """Test that an absent dataset is reported"""
        with pytest.raises(DatasetIOError):
            DatasetStore(tmp_path / "absent").connect()

    def test_create_makes_scene_directory(self, tmp_path):
        """Test that create builds the layout"""
        dataset = DatasetStore(tmp_path / "new")
        dataset.connect(create=True)
        assert (tmp_path / "new" / "scenes").is_dir()
        assert dataset.is_connected

    def test_unconnected_store_raises_error(self, tmp_path, sample_manifest_entry):
        """Test that reading requires a connection"""
        with pytest.raises(RuntimeError):
            DatasetStore(tmp_path).read_manifest()
        with pytest.raises(RuntimeError):
            DatasetStore(tmp_path).load_depth(sample_manifest_entry)

    def test_close(self, store):
        """Test that closing disconnects"""
        store.close()
        assert store.is_connected is False


class TestManifest:
    """Tests for the line-delimited manifest"""

    def test_round_trip(self, store, sample_manifest_entry):
        """Test that written entries are read back unchanged"""
        second = sample_manifest_entry.model_copy(update={"scene_id": "cuboid-t42-0001"})
        path = store.write_manifest([sample_manifest_entry, second])
        assert path.name == MANIFEST_NAME
        assert store.read_manifest() == [sample_manifest_entry, second]
        assert read_manifest(path, limit=1) == [sample_manifest_entry]

    def test_blank_lines_are_skipped(self, store, sample_manifest_entry):
        """Test tolerance of trailing blank lines"""
        store.write_manifest([sample_manifest_entry])
        with open(store.manifest_path, "a", encoding="utf-8") as f:
            f.write("\n\n")
        assert len(store.read_manifest()) == 1

    def test_invalid_record_raises_error(self, store, sample_manifest_entry):
        """Test that a broken line names its position"""
        store.write_manifest([sample_manifest_entry])
        with open(store.manifest_path, "a", encoding="utf-8") as f:
            f.write('{"scene_id": "broken"}\n')
        with pytest.raises(InputError) as exc_info:
            store.read_manifest()
        assert ":2: invalid manifest record" in str(exc_info.value)

    def test_missing_manifest_raises_error(self, tmp_path):
        """Test that a missing manifest is a dataset error"""
        with pytest.raises(DatasetIOError):
            read_manifest(tmp_path / MANIFEST_NAME)

    def test_open_dataset_for_manifest(self, store, sample_manifest_entry):
        """Test that the store is rooted at the manifest directory"""
        path = store.write_manifest([sample_manifest_entry])
        opened = open_dataset_for(path)
        assert opened.root == store.root
        assert opened.is_connected


class TestSceneFiles:
    """Tests for scene depth and segmentation files"""

    def test_write_then_load(self, store, sample_manifest_entry, small_camera):
        """Test that a written scene is found through its manifest paths"""
        depth = np.full((small_camera.height, small_camera.width), 0.45)
        labels = np.zeros(depth.shape, dtype=np.uint8)
        labels[40:60, 60:90] = 2
        paths = store.write_scene(sample_manifest_entry.scene_id, DepthImage(depth=depth), small_camera, labels)
        assert paths == (sample_manifest_entry.depth_path, sample_manifest_entry.depth_pgm_path,
                         sample_manifest_entry.segmentation_path)

        loaded, cam = store.load_depth(sample_manifest_entry)
        assert np.allclose(loaded.depth, 0.45)
        assert cam == small_camera
        assert np.array_equal(read_label_pgm(store.root / sample_manifest_entry.segmentation_path), labels)
