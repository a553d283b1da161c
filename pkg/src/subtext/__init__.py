"""Harvest platform-side TikTok subtitles from capture files into transcripts and corpora."""

__version__ = "0.1.0"
