"""Synthetic scenes, templated questions and ground-truth cognitive maps."""

from .cogmap import CognitiveMap, cognitive_map, cognitive_map_schema, validate_cognitive_map
from .questions import (KINDS, LETTERS, TEMPLATES, NoValidQuestion, Question, QuestionConfig, TemplateParseError, build_question,
                        candidates, gen_appearance_order, gen_count, gen_direction_backward,
                        gen_direction_forward, gen_farthest, gen_obstruction, generate_questions, parse_text,
                        read_questions, regenerate_ground_truth, render_text, write_questions)
from .scenes import InfeasibleSceneError, SceneConfig, generate_scene

__all__ = [
    "CognitiveMap", "cognitive_map", "cognitive_map_schema", "validate_cognitive_map",
    "KINDS", "LETTERS", "TEMPLATES", "NoValidQuestion", "Question", "QuestionConfig", "TemplateParseError", "build_question",
    "candidates", "gen_appearance_order", "gen_count", "gen_direction_backward", "gen_direction_forward",
    "gen_farthest", "gen_obstruction", "generate_questions", "parse_text", "read_questions",
    "regenerate_ground_truth", "render_text", "write_questions",
    "InfeasibleSceneError", "SceneConfig", "generate_scene",
]
