"""Multi-view pedestrian-vehicle incident reasoning: pipeline engine and evaluation harness."""

from .core import (CaptionRecord, AnswerRecord, EvaluationSummary, EventInfoSet, MultiViewEvent,
                   PhaseAnalysis, PhaseLabel, PhaseSegmentation, QAItem, QAScope, Perspective,
                   TimeInterval, ViewKind, ViewStream, phase_slice, validate_segmentation)
from .errors import PvirError
from .backend import GenerateRequest, GenerateResponse, HttpBackend, MockBackend, fingerprint
from .grounding import build_grounding_prompt, parse_segmentation_response, segment_event
from .reasoning import analyze_phase, build_caption_prompt, build_vqa_prompt, extract_answer_choice
from .synthesis import IncidentReport, RetryPolicy, synthesize_report, validate_report

__version__ = "0.1.0"
