"""Corpus manifests.

A manifest is a UTF-8 tab-separated file with one utterance per line:

    speaker_id  condition  utterance_id  audio_path  video_path

Paths are stored relative to the manifest's directory; reading resolves
them to absolute paths.
"""

from dataclasses import dataclass
import os
from typing import Iterable, Optional

import pandas as pd

from source.data.video import VideoClip, read_video_frames
from source.dsp.stft import Waveform, peak_normalize, read_wav
from source.utils.errors import IoError, MalformedCsv, ValidationError
from source.utils.path import atomic_target

CONDITIONS = ('L', 'NL')
MANIFEST_COLUMNS = ['speaker_id', 'condition', 'utterance_id', 'audio_path', 'video_path']


@dataclass(frozen=True)
class ManifestEntry:
    speaker_id: str
    condition: str
    utterance_id: str
    audio_path: str
    video_path: str

    def __post_init__(self):
        if self.condition not in CONDITIONS:
            raise ValidationError(f"Condition must be one of {CONDITIONS}, got '{self.condition}'.")

    @property
    def key(self) -> tuple[str, str]:
        """(speaker, utterance), shared by the L and NL recordings."""
        return (self.speaker_id, self.utterance_id)

    @property
    def name(self) -> str:
        return f"{self.speaker_id}/{self.condition}/{self.utterance_id}"


class Manifest:
    def __init__(self, entries: Iterable[ManifestEntry]):
        """Entries indexed by (speaker, condition, utterance), which must be unique."""

        self.entries = list(entries)
        self._index = {}
        for entry in self.entries:
            index_key = (entry.speaker_id, entry.condition, entry.utterance_id)
            if index_key in self._index:
                raise ValidationError(f"Duplicate manifest entry {entry.name}.")
            self._index[index_key] = entry

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def speakers(self) -> list[str]:
        return sorted({entry.speaker_id for entry in self.entries})

    def get(self, speaker_id: str, condition: str, utterance_id: str) -> Optional[ManifestEntry]:
        return self._index.get((speaker_id, condition, utterance_id))

    def utterances(self, speaker_id: str, condition: str) -> list[str]:
        """Sorted utterance ids of one speaker in one condition."""
        return sorted(u for s, c, u in self._index if s == speaker_id and c == condition)


def _resolve(path: str, root: str) -> str:
    return path if os.path.isabs(path) else os.path.normpath(os.path.join(root, path))


def entries_to_frame(entries: Iterable[ManifestEntry], root: Optional[str] = None) -> pd.DataFrame:
    """Entries as a DataFrame, paths made relative to `root` if given."""

    rows = []
    for entry in entries:
        row = [entry.speaker_id, entry.condition, entry.utterance_id, entry.audio_path, entry.video_path]
        if root is not None:
            row[3:] = [os.path.relpath(path, root) if os.path.isabs(path) else path for path in row[3:]]
        rows.append(row)
    return pd.DataFrame(rows, columns=MANIFEST_COLUMNS)


def frame_to_entries(frame: pd.DataFrame, root: str) -> list[ManifestEntry]:
    return [
        ManifestEntry(
            str(row.speaker_id), str(row.condition), str(row.utterance_id),
            _resolve(str(row.audio_path), root), _resolve(str(row.video_path), root),
        ) for row in frame.itertuples(index=False)
    ]


def read_manifest(path: str) -> Manifest:

    try:
        frame = pd.read_csv(path, sep='\t', header=None, names=MANIFEST_COLUMNS, dtype=str, keep_default_na=False)
    except FileNotFoundError as error:
        raise IoError(f"Manifest {path} does not exist.") from error
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as error:
        raise MalformedCsv(f"Manifest {path} is not a 5-column TSV: {error}") from error

    if frame.isna().any().any() or (frame == '').any().any():
        raise MalformedCsv(f"Manifest {path} has missing or empty fields.")

    return Manifest(frame_to_entries(frame, os.path.dirname(os.path.abspath(path))))


def write_manifest(entries: Iterable[ManifestEntry], path: str):
    """Atomically write `entries` with paths relative to the manifest's directory."""

    frame = entries_to_frame(entries, root=os.path.dirname(os.path.abspath(path)))
    tmp_path = atomic_target(path)
    try:
        frame.to_csv(tmp_path, sep='\t', header=False, index=False, lineterminator='\n')
        os.replace(tmp_path, path)
    except OSError as error:
        raise IoError(f"Cannot write manifest {path}: {error}") from error


def load_audio(entry: ManifestEntry) -> Waveform:
    """Peak-normalised recording of `entry`."""
    return peak_normalize(read_wav(entry.audio_path))


def load_video(entry: ManifestEntry) -> VideoClip:
    return read_video_frames(entry.video_path)


def with_condition(entry: ManifestEntry, manifest: Manifest, condition: str) -> Optional[ManifestEntry]:
    """The recording of the same sentence by the same speaker in `condition`."""
    if entry.condition == condition:
        return entry
    return manifest.get(entry.speaker_id, condition, entry.utterance_id)
