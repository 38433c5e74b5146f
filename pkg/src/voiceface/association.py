"""Assign speech clusters to the face cluster they co-occur with most."""

import numpy as np

from .faces import presence_counts
from .structures import OFF_SCREEN, SpeakerTimeline, TimelineEntry


def cluster_extent(cluster, segments_by_id):
    """Union of the member segments' intervals, as sorted disjoint pairs."""
    spans = sorted((segments_by_id[s].start_s, segments_by_id[s].end_s) for s in cluster.segment_ids)
    union = [list(spans[0])]
    for start, end in spans[1:]:
        if start <= union[-1][1]:
            union[-1][1] = max(union[-1][1], end)
        else:
            union.append([start, end])
    return [tuple(u) for u in union]


def cooccurrence_table(speech_clusters, face_clusters, segments):
    """Counts ``table[i, j]``: detections of face cluster ``j`` inside speech cluster ``i``.

    Rows follow ``speech_clusters`` order and columns ``face_clusters``
    order.  The counted region is the union of the speech cluster's
    segment intervals, never the span between them.
    """
    by_id = {s.segment_id: s for s in segments}
    table = np.zeros((len(speech_clusters), len(face_clusters)), dtype=np.int64)
    for i, sc in enumerate(speech_clusters):
        for start, end in cluster_extent(sc, by_id):
            for j, fc in enumerate(face_clusters):
                table[i, j] += presence_counts(fc, start, end)
    return table


def estimate_sample_rate(face_clusters):
    """Face sampling rate from the median spacing of distinct detection times."""
    if not face_clusters:
        return None
    times = np.unique(np.concatenate([fc.presence for fc in face_clusters]))
    if times.size < 2:
        return None
    step = np.median(np.diff(times))
    return 1.0 / step if step > 0 else None


def choose_faces(speech_clusters, face_clusters, segments, min_coverage=0.0, face_sample_rate_hz=None):
    """Map each speech cluster id to a face cluster id or ``OFF_SCREEN``.

    The winner is the face cluster with the most detections during the
    speech cluster (lowest cluster id on ties).  A cluster is off-screen
    when that count is zero, or when it falls below ``min_coverage`` times
    the number of face samples the extent could hold.
    """
    if not 0.0 <= min_coverage <= 1.0:
        raise ValueError("min_coverage must be a fraction in [0, 1]")
    faces = sorted(face_clusters, key=lambda f: f.cluster_id)
    table = cooccurrence_table(speech_clusters, faces, segments)
    by_id = {s.segment_id: s for s in segments}
    rate = face_sample_rate_hz
    if min_coverage > 0 and rate is None:
        rate = estimate_sample_rate(faces)
    choice = {}
    for i, sc in enumerate(speech_clusters):
        if not faces or table[i].max() == 0:
            choice[sc.cluster_id] = OFF_SCREEN
            continue
        j = int(np.argmax(table[i]))
        best = table[i, j]
        if min_coverage > 0 and rate:
            duration = sum(e - s for s, e in cluster_extent(sc, by_id))
            if best < min_coverage * duration * rate:
                choice[sc.cluster_id] = OFF_SCREEN
                continue
        choice[sc.cluster_id] = faces[j].cluster_id
    return choice


def associate(speech_clusters, face_clusters, segments, min_coverage=0.0, face_sample_rate_hz=None):
    """Build the speaker timeline: one entry per speech segment.

    Every entry carries the assignment of the speech cluster its segment
    belongs to.
    """
    choice = choose_faces(speech_clusters, face_clusters, segments, min_coverage, face_sample_rate_hz)
    owner = {}
    for sc in speech_clusters:
        for sid in sc.segment_ids:
            if sid in owner:
                raise ValueError(f"segment {sid} belongs to more than one speech cluster")
            owner[sid] = sc.cluster_id
    entries = []
    for seg in sorted(segments, key=lambda s: s.start_s):
        if seg.segment_id not in owner:
            raise ValueError(f"segment {seg.segment_id} is not in any speech cluster")
        cid = owner[seg.segment_id]
        entries.append(TimelineEntry(seg.start_s, seg.end_s, cid, choice[cid]))
    return SpeakerTimeline(entries)


def merge_speech_clusters_by_face(timeline):
    """``{face_cluster_id: {speech_cluster_id, ...}}``; off-screen clusters are left out."""
    groups = {}
    for e in timeline.entries:
        if not e.off_screen:
            groups.setdefault(int(e.assignment), set()).add(e.speech_cluster_id)
    return groups


def speaker_summary(timeline):
    """Plain-text table of total speaking time per assigned speaker."""
    totals = {}
    for e in timeline.entries:
        key = OFF_SCREEN + f" (speech cluster {e.speech_cluster_id})" if e.off_screen else f"face {e.assignment}"
        totals[key] = totals.get(key, 0.0) + (e.end_s - e.start_s)
    width = max([len(k) for k in totals] + [7])
    lines = [f"{'speaker':<{width}}  seconds"]
    for key, secs in sorted(totals.items(), key=lambda kv: (-kv[1], kv[0])):
        lines.append(f"{key:<{width}}  {secs:8.2f}")
    return "\n".join(lines)
