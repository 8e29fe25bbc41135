"""The agent's tool suite bound to one perception provider."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .. import relations, toolkit
from ..knowledge import KnowledgeStore, default_store, retrieve
from .schema import ArgSpec, ToolRegistry, ToolSchema

__all__ = [
    "ToolConfig",
    "build_registry",
    "inject_heavy_payloads",
    "NoPriorOutputError",
    "HEAVY_ARGS",
    "TOOL_FAMILIES",
    "QUERY_TEMPLATES",
    "render_query_prompt",
]

HEAVY_ARGS = ("output_2d", "tool_3d_output")

TOOL_FAMILIES = (
    "2d_detection", "tracking", "3d_detection", "scene_modeling",
    "knowledge_retrieval", "video_image_query", "utility",
)

# Strict prompts for numeric estimates through the video query tool.
QUERY_TEMPLATES = {
    "room_area": (
        "You are an expert at estimating room size (area) from videos.\n"
        "Use the visual information in the video to answer the user's question.\n"
        "Return ONLY a single best numerical estimate (integer or decimal) in square meters.\n"
        "Output format (STRICT): <answer>NUMBER</answer>\n"
        "- Do NOT output units.\n"
        "- Do NOT output a range.\n"
        "- Do NOT output any explanation.\n\n"
        "QUESTION: {question}\n"
    ),
    "distance": (
        "You are an expert at estimating REAL-WORLD distance between two objects from videos.\n"
        "Use the visual information in the video to answer the user's question.\n"
        "Return ONLY a single best numerical estimate (integer or decimal) in meters.\n"
        "Output format (STRICT): <answer>NUMBER</answer>\n"
        "- Do NOT output units.\n"
        "- Do NOT output a range.\n"
        "- Do NOT output any explanation.\n\n"
        "QUESTION: {question}\n"
    ),
}


def render_query_prompt(kind: str, question: str) -> str:
    return QUERY_TEMPLATES[kind].format(question=question)


class NoPriorOutputError(LookupError):
    pass


@dataclass
class ToolConfig:
    clustering: str = "constrained_greedy"
    epsilon: float = 0.5
    dbscan_min_points: int = 2
    obstruction_threshold: float = relations.DEFAULT_OBSTRUCTION_THRESHOLD
    height_tolerance: float = relations.DEFAULT_HEIGHT_TOLERANCE
    ransac_iterations: int = 1000
    ransac_threshold: float = 0.02
    knowledge: Optional[KnowledgeStore] = field(default=None, repr=False)


VIDEO = ArgSpec("video_path", "str", description="Video identifier; pass the exact string you were given.")
OUT2D = ArgSpec("output_2d", "dict", description=(
    "Output of tool_2d_object_detection. Pass {} and the system fills in the latest one."))
OUT3D = ArgSpec("tool_3d_output", "payload", description=(
    "Output of tool_object_3d_detection. Pass {} and the system fills in the latest one."))


def _instance(name, what):
    return ArgSpec(name, "str", description=f"{what}. Must be an instance id such as 'tv_1', not a category name.")


SCHEMAS = [
    ToolSchema(
        "tool_2d_object_detection",
        (VIDEO, ArgSpec("objects", "str", description=(
            "Comma-separated category names: every target object plus the reference (anchor) object."))),
        '{"<category>": {"views": [{"frame": int, "bbox": [x1, y1, x2, y2]}, ...]}, ...}',
        "Per-frame 2D boxes for the requested categories over uniformly sampled frames. The views are "
        "per category, not per physical object, so never count with this tool. Use it for first-appearance "
        "order, rough image-space position, and as the required input of tool_object_3d_detection. "
        "Example: 'Which object is closest to the tv?' with choices chair, sofa, stool -> "
        "objects='chair, sofa, stool, tv'.",
        family="2d_detection", produces="output_2d",
    ),
    ToolSchema(
        "tool_object_tracking",
        (VIDEO, OUT2D),
        '{"video_path": str, "tracklets": {"<category>": [{"object_ref", "category", "views": [...], '
        '"termination_reason"}]}}',
        "Propagates detected boxes forward through the video at 2 frames per second. A run stops after "
        "50 frames or once the object is missing in two consecutive tracked frames.",
        family="tracking",
    ),
    ToolSchema(
        "tool_object_3d_detection",
        (VIDEO, OUT2D,
         ArgSpec("using_tracking", "bool", False, False,
                 "Group views by tracklets before clustering. Set True for counting."),
         ArgSpec("aligned_scene", "bool", False, False,
                 "Express results in the gravity-aligned frame (z up). Set True for direction or height.")),
        '{"video_path": str, "using_tracking": bool, "aligned_scene": bool, "instances": '
        '[{"instance_id": "chair_1", "category": "chair", "3d_center": [x, y, z], '
        '"bbox_3d": [x1, y1, z1, x2, y2, z2], "member_count": int}, ...]}',
        "Lifts 2D views to 3D centers and clusters them into physical instances, so it can be used for "
        "counting and for distance or direction reasoning with 3d_center. Instances of a category are "
        "ranked by member_count; suffix _1 is the most visible one. Call after tool_2d_object_detection.",
        family="3d_detection", produces="tool_3d_output",
    ),
    ToolSchema(
        "tool_scene_modeling",
        (VIDEO,),
        '{"video_path": str, "ground_plane": {"normal", "offset"}, "up_direction": [x, y, z], '
        '"transform": {"rotation", "translation"}, "frames_used": int, "inlier_ratio": float}',
        "Fits the floor plane per frame with RANSAC, averages the fits, and returns the rigid transform "
        "into a frame where the floor is z=0 and +z points to the side holding most of the scene.",
        family="scene_modeling",
    ),
    ToolSchema(
        "tool_knowledge_retrieval",
        (ArgSpec("query", "str", description="Question text or a short caption."),
         ArgSpec("top_k", "int", False, 5, "Number of entries to return.")),
        '{"query": str, "top_k": int, "entries": ["name: LxWxH m ± std; description", ...]}',
        "Size statistics of common objects and rooms, for estimates that need priors beyond what "
        "the video shows.",
        family="knowledge_retrieval",
    ),
    ToolSchema(
        "tool_video_image_query",
        (VIDEO, ArgSpec("prompt", "str", description="The query prompt."),
         ArgSpec("query_type", "str", False, "video", "Query the whole video or one frame.",
                 choices=("video", "image")),
         ArgSpec("frame_idx", "int", False, -1, "Frame index; required when query_type='image'.")),
        '{"video_path": str, "query_type": "video"|"image", "frame_idx": int|null, "prompt": str, '
        '"response": str}',
        "Asks the video (or one frame) directly and returns free text. For room area or metric distance "
        "use the strict templates, which ask for <answer>NUMBER</answer>.",
        family="video_image_query",
    ),
    ToolSchema(
        "tool_calculate_distance",
        (OUT3D, VIDEO, _instance("reference_instance", "Reference instance"),
         ArgSpec("target_instances", "str", description="Comma-separated instance ids.")),
        '{"video_path": str, "result": {"reference_instance": str, "target_instances": [str], '
        '"distances": {"<id>": float}, "unit": "relative"}}',
        "Euclidean distances between 3D centers. Values are in scene units, not guaranteed metres.",
    ),
    ToolSchema(
        "tool_calculate_direction",
        (OUT3D, VIDEO, _instance("stand_instance", "Where the observer stands"),
         _instance("face_instance", "What the observer faces"),
         _instance("target_instance", "The object to locate")),
        '{"video_path": str, "result": {"stand_instance", "face_instance", "target_instance", '
        '"direction": "front-left|front-right|back-left|back-right", "evidence": {...}}}',
        "Quadrant of the target in the observer's frame on the ground plane. Prefer suffix _1 when a "
        "category has several instances. Needs aligned 3D output.",
    ),
    ToolSchema(
        "tool_compare_height",
        (OUT3D, VIDEO, _instance("instance_a", "First instance"), _instance("instance_b", "Second instance")),
        '{"video_path": str, "result": {"instance_a", "instance_b", "z_a": float, "z_b": float, '
        '"relation": "a_higher|b_higher|equal"}}',
        "Compares z of two instance centers. Only valid on 3D output produced with aligned_scene=True.",
    ),
    ToolSchema(
        "tool_calculate_obstruction",
        (OUT3D, VIDEO, _instance("source_instance", "Route start"),
         _instance("destination_instance", "Route end"),
         _instance("obstruction_instance", "Candidate obstacle")),
        '{"video_path": str, "result": {"source_instance", "destination_instance", "obstruction_instance", '
        '"is_obstruction": bool, "evidence": {"source_center", "destination_center", "obstruction_center", '
        '"t", "closest_point", "distance_to_segment", "threshold"}}}',
        "Checks whether the candidate's 3D center lies near the straight segment between source and "
        "destination centers, strictly between the endpoints.",
    ),
]


def _split_ids(text: str) -> list:
    ids = [s.strip() for s in text.split(",") if s.strip()]
    if not ids:
        raise ValueError("target_instances must list at least one instance id")
    return ids


def build_registry(provider, config: ToolConfig | None = None) -> ToolRegistry:
    """Registry of all ten tools answering from ``provider``."""
    cfg = config or ToolConfig()
    store = cfg.knowledge if cfg.knowledge is not None else default_store()

    def check_video(path):
        if path != provider.video_path:
            raise ValueError(f"unknown video_path {path!r}; this session serves {provider.video_path!r}")

    def instances(tool_3d_output, video_path):
        check_video(video_path)
        if isinstance(tool_3d_output, dict) and "video_path" in tool_3d_output:
            if tool_3d_output["video_path"] != video_path:
                raise ValueError("video_path does not match tool_3d_output['video_path']")
        return toolkit.instances_from_output(tool_3d_output)

    def align_kwargs():
        return {"iterations": cfg.ransac_iterations, "inlier_threshold": cfg.ransac_threshold}

    def detect_2d(video_path, objects):
        check_video(video_path)
        return toolkit.object_2d_detection(provider, objects)

    def tracking(video_path, output_2d):
        check_video(video_path)
        return toolkit.object_tracking(provider, output_2d)

    def detect_3d(video_path, output_2d, using_tracking, aligned_scene):
        check_video(video_path)
        if aligned_scene:
            toolkit.aligning_transform(provider, **align_kwargs())
        return toolkit.object_3d_detection(
            provider, output_2d, using_tracking, aligned_scene, method=cfg.clustering,
            epsilon=cfg.epsilon, min_points=cfg.dbscan_min_points,
        )

    def scene_modeling(video_path):
        check_video(video_path)
        return toolkit.scene_modeling(provider, **align_kwargs())

    def knowledge(query, top_k):
        return retrieve(store, query, top_k)

    def video_query(video_path, prompt, query_type, frame_idx):
        check_video(video_path)
        response = provider.answer_query(prompt, query_type, frame_idx)
        return {"video_path": video_path, "query_type": query_type,
                "frame_idx": frame_idx if query_type == "image" else None,
                "prompt": prompt, "response": response}

    def distance(tool_3d_output, video_path, reference_instance, target_instances):
        inst = instances(tool_3d_output, video_path)
        return {"video_path": video_path,
                "result": relations.calculate_distance(inst, reference_instance, _split_ids(target_instances))}

    def direction(tool_3d_output, video_path, stand_instance, face_instance, target_instance):
        inst = instances(tool_3d_output, video_path)
        return {"video_path": video_path,
                "result": relations.calculate_direction(inst, stand_instance, face_instance, target_instance)}

    def height(tool_3d_output, video_path, instance_a, instance_b):
        inst = instances(tool_3d_output, video_path)
        return {"video_path": video_path,
                "result": relations.compare_height(inst, instance_a, instance_b, cfg.height_tolerance)}

    def obstruction(tool_3d_output, video_path, source_instance, destination_instance,
                    obstruction_instance):
        inst = instances(tool_3d_output, video_path)
        return {"video_path": video_path,
                "result": relations.calculate_obstruction(
                    inst, source_instance, destination_instance, obstruction_instance,
                    cfg.obstruction_threshold)}

    impls = {
        "tool_2d_object_detection": detect_2d,
        "tool_object_tracking": tracking,
        "tool_object_3d_detection": detect_3d,
        "tool_scene_modeling": scene_modeling,
        "tool_knowledge_retrieval": knowledge,
        "tool_video_image_query": video_query,
        "tool_calculate_distance": distance,
        "tool_calculate_direction": direction,
        "tool_compare_height": height,
        "tool_calculate_obstruction": obstruction,
    }
    registry = ToolRegistry()
    for schema in SCHEMAS:
        registry.register(schema, impls[schema.name])
    return registry


def _is_empty_payload(value) -> bool:
    return isinstance(value, (dict, list)) and len(value) == 0


def inject_heavy_payloads(args: dict, chain, registry: ToolRegistry) -> tuple:
    """Fill empty ``output_2d`` / ``tool_3d_output`` args from the call chain.

    Returns ``(args, injected)`` where ``injected`` maps each filled argument
    to the index of the chain entry it came from. Failed calls never count as
    producers.
    """
    out = dict(args)
    injected = {}
    for key in HEAVY_ARGS:
        if key not in out or not _is_empty_payload(out[key]):
            continue
        producers = set(registry.producers(key))
        for idx in range(len(chain) - 1, -1, -1):
            entry = chain[idx]
            if entry.call.tool in producers and not entry.failed:
                out[key] = entry.raw_output
                injected[key] = idx
                break
        else:
            raise NoPriorOutputError(f"no earlier successful call produced {key!r} to inject")
    return out, injected
