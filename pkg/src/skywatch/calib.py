"""Flux normalization: remove per-cell systematic magnitude offsets.

Clouds and other external interference shift whole regions of a catalog by
a common magnitude offset.  Comparing matched standard stars to their
template reference magnitudes per sky cell gives a robust (median) estimate
of that offset, which is then subtracted before detection and storage.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .partition import Partitioner
from .simgen import Catalog
from .xmatch import MatchResult, Template


class CalibrationError(RuntimeError):
    """No standard stars available camera-wide; catalog left unnormalized."""


@dataclass
class OffsetMap:
    """Per-cell magnitude offsets fitted from standard stars."""

    offsets: dict[int, float] = field(default_factory=dict)
    n_standards: dict[int, int] = field(default_factory=dict)
    global_offset: float = 0.0

    def offset_for_cell(self, cell: int) -> float:
        return self.offsets.get(cell, self.global_offset)

    @property
    def all_zero(self) -> bool:
        return self.global_offset == 0.0 and all(v == 0.0 for v in self.offsets.values())


def fit_offsets(rows: Catalog, match: MatchResult, template: Template,
                partitioner: Partitioner | None = None) -> OffsetMap:
    """Fit per-cell offsets as median(observed - reference) over standards.

    Cells without standards inherit the camera-global median.  Raises
    CalibrationError when the whole camera has no matched standard star.
    """
    part = partitioner or template.partitioner
    matched = np.flatnonzero(~match.is_new)
    if len(matched) == 0:
        raise CalibrationError("no matched rows to calibrate against")

    idx_in_template = match.template_row[matched]
    std_mask = template.is_standard[idx_in_template]
    std_rows = matched[std_mask]
    std_tpl = idx_in_template[std_mask]
    if len(std_rows) == 0:
        raise CalibrationError("no standard stars matched camera-wide")

    residual = rows.columns["mag"][std_rows] - template.ref_mag[std_tpl]
    cells = part.index_of(template.ra_deg[std_tpl], template.dec_deg[std_tpl])

    out = OffsetMap(global_offset=float(np.median(residual)))
    order = np.argsort(cells, kind="stable")
    cells_sorted = cells[order]
    res_sorted = residual[order]
    bounds = np.flatnonzero(np.diff(cells_sorted)) + 1
    for cell_group, res_group in zip(
            np.split(cells_sorted, bounds), np.split(res_sorted, bounds)):
        cell = int(cell_group[0])
        out.offsets[cell] = float(np.median(res_group))
        out.n_standards[cell] = len(res_group)
    return out


def normalize(rows: Catalog, offsets: OffsetMap,
              partitioner: Partitioner | None = None,
              match: MatchResult | None = None,
              template: Template | None = None) -> Catalog:
    """Return a catalog with each row's mag reduced by its cell offset.

    Matched rows take the cell of their template star (the same assignment
    fit_offsets used), so per-cell standard-star residuals center exactly;
    unmatched rows fall back to their own position.  Only the mag column
    changes; every other column is carried through untouched.
    """
    part = partitioner or Partitioner()
    cols = dict(rows.columns)
    cells = part.index_of(cols["ra_deg"], cols["dec_deg"])
    if match is not None and template is not None:
        matched = np.flatnonzero(~match.is_new)
        if len(matched):
            tpl_rows = match.template_row[matched]
            cells = cells.copy()
            cells[matched] = part.index_of(template.ra_deg[tpl_rows],
                                           template.dec_deg[tpl_rows])
    shift = np.full(len(rows), offsets.global_offset)
    for cell, off in offsets.offsets.items():
        shift[cells == cell] = off
    cols["mag"] = cols["mag"] - shift
    return Catalog(cols)
