"""Superpoint-based zero-shot point cloud segmentation."""

try:
    from spnerf import _spnerf  # installed layout: extension inside the package
except ImportError:
    import _spnerf  # build-tree layout: extension next to the interpreter path

FeatureField = _spnerf.FeatureField
PointCloud = _spnerf.PointCloud
SegmentationResult = _spnerf.SegmentationResult
SpnerfError = _spnerf.SpnerfError
SuperpointPartition = _spnerf.SuperpointPartition
build_superpoints = _spnerf.build_superpoints
default_config_json = _spnerf.default_config_json
default_scene_json = _spnerf.default_scene_json
estimate_normals = _spnerf.estimate_normals
farthest_point_sampling = _spnerf.farthest_point_sampling
generate_scene = _spnerf.generate_scene
miou_macc = _spnerf.miou_macc
point_relevancy = _spnerf.point_relevancy
read_field = _spnerf.read_field
read_partition = _spnerf.read_partition
read_ply = _spnerf.read_ply
run_pipeline = _spnerf.run_pipeline
write_ply = _spnerf.write_ply

__all__ = [
    "FeatureField",
    "PointCloud",
    "SegmentationResult",
    "SpnerfError",
    "SuperpointPartition",
    "build_superpoints",
    "default_config_json",
    "default_scene_json",
    "estimate_normals",
    "farthest_point_sampling",
    "generate_scene",
    "miou_macc",
    "point_relevancy",
    "read_field",
    "read_partition",
    "read_ply",
    "run_pipeline",
    "write_ply",
]
