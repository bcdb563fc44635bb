"""Tests for mesh loading, primitives, point cloud files and the worker pool"""
import numpy as np
import pytest
import trimesh

from exceptions import DatasetIOError, InputError
from models.enums import Primitive
from models.geometry import OrientedPointCloud
from services.mesh_io import load_mesh, load_point_cloud, make_primitive, write_point_cloud
from services.parallel import parallel_map


class TestPrimitives:
    """Tests for the bundled primitive objects"""

    @pytest.mark.parametrize("primitive,extents", [
        (Primitive.CYLINDER, [0.035, 0.035, 0.064]),
        (Primitive.ELLIPSOID, [0.035, 0.035, 0.064]),
        (Primitive.CUBOID, [0.03, 0.03, 0.064]),
    ])
    def test_dimensions(self, primitive, extents):
        """Test the bounding box of each primitive"""
        lower, upper = make_primitive(primitive).bounds()
        assert np.allclose(upper - lower, extents, atol=1e-3)
        assert np.allclose((upper + lower) / 2.0, 0.0, atol=1e-9)

    def test_primitive_source(self):
        """Test the primitive:<name> source form"""
        assert len(load_mesh("primitive:cuboid").triangles) == 12

    def test_unknown_primitive_raises_error(self):
        """Test that a misspelled primitive is an input error"""
        with pytest.raises(InputError) as exc_info:
            load_mesh("primitive:sphere")
        assert "unknown primitive 'sphere'" in str(exc_info.value)


class TestMeshFiles:
    """Tests for OBJ/PLY mesh loading"""

    def test_obj_file(self, tmp_path):
        """Test loading an exported box"""
        path = tmp_path / "box.obj"
        trimesh.creation.box(extents=[0.02, 0.02, 0.02]).export(path)
        lower, upper = load_mesh(path).bounds()
        assert np.allclose(upper - lower, 0.02)

    def test_missing_file_raises_error(self, tmp_path):
        """Test that an absent mesh is a dataset error"""
        with pytest.raises(DatasetIOError):
            load_mesh(tmp_path / "absent.obj")


class TestPointCloudFiles:
    """Tests for PLY point clouds with normals"""

    @staticmethod
    def read_vertices(path):
        loaded = trimesh.load(path, process=False)
        return loaded.metadata["_ply_raw"]["vertex"]["data"]

    def test_positions_and_normals(self, tmp_path):
        """Test that positions and normals are written as vertex properties"""
        rng = np.random.default_rng(0)
        normals = rng.normal(size=(20, 3))
        cloud = OrientedPointCloud(positions=rng.uniform(-0.1, 0.1, (20, 3)),
                                   normals=normals / np.linalg.norm(normals, axis=1, keepdims=True))
        path = tmp_path / "cloud.ply"
        write_point_cloud(cloud, path)

        vertices = self.read_vertices(path)
        assert np.allclose(np.stack([vertices["x"], vertices["y"], vertices["z"]], axis=1), cloud.positions, atol=1e-6)
        assert np.allclose(np.stack([vertices["nx"], vertices["ny"], vertices["nz"]], axis=1), cloud.normals, atol=1e-6)
        assert np.all(vertices["valid_normal"] == 1)

    def test_degenerate_normals_are_flagged(self, tmp_path):
        """Test that the normal validity flags are preserved"""
        valid = np.array([True, False, True, False])
        cloud = OrientedPointCloud(positions=np.eye(4, 3), normals=[[0.0, 0.0, 1.0]] * 4, valid_normals=valid)
        path = tmp_path / "flags.ply"
        write_point_cloud(cloud, path)
        assert np.array_equal(self.read_vertices(path)["valid_normal"].astype(bool), valid)

    def test_unwritable_path_raises_error(self, tmp_path):
        """Test that a missing directory is a dataset error"""
        cloud = OrientedPointCloud(positions=[[0.0, 0.0, 0.4]], normals=[[0.0, 0.0, -1.0]])
        with pytest.raises(DatasetIOError):
            write_point_cloud(cloud, tmp_path / "absent" / "cloud.ply")

    def test_write_then_load(self, tmp_path):
        """Test that positions, normals and validity flags survive a PLY file"""
        rng = np.random.default_rng(1)
        normals = rng.normal(size=(12, 3))
        cloud = OrientedPointCloud(positions=rng.uniform(-0.1, 0.1, (12, 3)),
                                   normals=normals / np.linalg.norm(normals, axis=1, keepdims=True),
                                   valid_normals=np.arange(12) % 3 != 0)
        path = tmp_path / "cloud.ply"
        write_point_cloud(cloud, path)
        loaded = load_point_cloud(path)
        assert np.allclose(loaded.positions, cloud.positions, atol=1e-6)
        assert np.allclose(loaded.normals, cloud.normals, atol=1e-6)
        assert np.array_equal(loaded.normal_mask, cloud.normal_mask)

    def test_cloud_without_normals(self, tmp_path):
        """Test that normals are estimated for a bare point cloud"""
        x, y = np.meshgrid(np.linspace(-0.05, 0.05, 6), np.linspace(-0.05, 0.05, 6))
        points = np.stack([x.ravel(), y.ravel(), np.full(x.size, 0.4)], axis=1)
        path = tmp_path / "bare.ply"
        trimesh.PointCloud(points).export(path, file_type="ply")
        loaded = load_point_cloud(path)
        assert len(loaded) == 36
        assert np.allclose(loaded.normals[loaded.normal_mask], [0.0, 0.0, -1.0], atol=1e-6)

    def test_missing_file_raises_error(self, tmp_path):
        """Test that an absent cloud is a dataset error"""
        with pytest.raises(DatasetIOError):
            load_point_cloud(tmp_path / "absent.ply")


class TestParallelMap:
    """Tests for the order-preserving worker pool"""

    def test_order_is_preserved(self):
        """Test that pooled results keep input order"""
        assert parallel_map(lambda x: x * x, range(50), workers=4) == [x * x for x in range(50)]

    def test_single_worker(self):
        """Test the sequential path"""
        assert parallel_map(str, [1, 2], workers=1) == ["1", "2"]

    def test_empty_input(self):
        """Test that nothing in gives nothing out"""
        assert parallel_map(str, [], workers=3) == []
