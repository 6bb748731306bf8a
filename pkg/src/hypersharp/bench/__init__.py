"""Benchmark campaign runner: synthetic scenes, fusion runs, tables and crops."""

from .campaign import CampaignResult, cmd_eval, cmd_sharpen, cmd_synth
from .crop import cmd_crop

__all__ = ["CampaignResult", "cmd_crop", "cmd_eval", "cmd_sharpen", "cmd_synth"]
