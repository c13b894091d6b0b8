"""
Material Registry Tests

Tests for the packaged parameter table, lookups and band offsets.
"""

import logging

import pytest

from app.core.exceptions import ConfigError, UnknownMaterial
from app.repositories.material_repo import (
    MaterialRepository,
    band_offsets,
    get_material_repository,
    lookup,
)

INGAAS = "In0.53Ga0.47As"
INALAS = "In0.52Al0.48As"
INP = "InP"


@pytest.mark.unit
class TestLookup:
    """Test parameter lookup in the packaged table."""

    def test_ingaas_values(self, materials: MaterialRepository):
        """The absorption / channel alloy carries the pinned values."""
        params = materials.lookup(INGAAS)

        assert params.E_g == pytest.approx(0.816)
        assert params.m_e == pytest.approx(0.041)
        assert params.eps_r == pytest.approx(13.9)
        assert params.g_e == pytest.approx(-4.5)

    def test_inp_g_factor(self, materials: MaterialRepository):
        """InP cladding g-factor is +1.2."""
        assert materials.lookup(INP).g_e == pytest.approx(1.2)

    def test_unknown_material(self, materials: MaterialRepository):
        """Names outside the table raise UnknownMaterial."""
        with pytest.raises(UnknownMaterial) as exc:
            materials.lookup("GaN")

        assert exc.value.name == "GaN"
        assert exc.value.exit_code == 2

    def test_lookup_is_stable(self, materials: MaterialRepository):
        """Repeated lookups return identical records."""
        assert materials.lookup(INALAS) is materials.lookup(INALAS)
        assert lookup(INALAS) == materials.lookup(INALAS)

    def test_table_version(self, materials: MaterialRepository):
        """The packaged table is versioned."""
        assert materials.version == "2025.1"
        assert set(materials.names()) >= {INGAAS, INALAS, INP}

    def test_repository_is_cached(self):
        """The default repository is a singleton."""
        assert get_material_repository() is get_material_repository()


@pytest.mark.unit
class TestBandOffsets:
    """Test conduction / valence offsets between materials."""

    def test_ingaas_inalas_conduction_offset(self, materials: MaterialRepository):
        """InAlAs sits 0.52 eV above InGaAs in the conduction band."""
        dEc, _ = band_offsets(materials.lookup(INALAS), materials.lookup(INGAAS))

        assert dEc == pytest.approx(0.52, abs=1e-9)

    def test_antisymmetric(self, materials: MaterialRepository):
        """Swapping the arguments flips both offsets exactly."""
        a, b = materials.lookup(INP), materials.lookup(INALAS)
        forward = band_offsets(a, b)
        backward = band_offsets(b, a)

        assert forward[0] == -backward[0]
        assert forward[1] == -backward[1]

    def test_offsets_consistent_with_gaps(self, materials: MaterialRepository):
        """dEc - dEv equals the gap difference."""
        for a_name, b_name in [(INGAAS, INP), (INALAS, INGAAS), (INP, INALAS)]:
            a, b = materials.lookup(a_name), materials.lookup(b_name)
            dEc, dEv = band_offsets(a, b)

            assert dEc - dEv == pytest.approx(a.E_g - b.E_g, abs=1e-12)

    def test_inp_inalas_type_ii(self, materials: MaterialRepository):
        """InP / InAlAs is staggered: InP lower in Ec, InAlAs higher in Ev."""
        dEc, dEv = band_offsets(materials.lookup(INP), materials.lookup(INALAS))

        assert dEc < 0
        assert dEv < 0


@pytest.mark.unit
class TestTableFile:
    """Test loading alternative material tables."""

    TABLE = """
version: "test-1"
temperature_K: 4.2
materials:
  In0.53Ga0.47As: {E_g: 0.8, m_e: 0.04, m_hh: 0.4, eps_r: 14, g_e: -4.5, E_c_ref: -4.5}
  In0.52Al0.48As: {E_g: 1.5, m_e: 0.07, m_hh: 0.4, eps_r: 12.5, g_e: 0.4, E_c_ref: -4.0}
  InP: {E_g: 1.4, m_e: 0.08, m_hh: 0.5, eps_r: 12.5, g_e: 1.2, E_c_ref: -4.25}
"""

    def test_from_text(self):
        """A complete table loads and keeps its version."""
        repo = MaterialRepository.from_text(self.TABLE)

        assert repo.version == "test-1"
        assert repo.lookup("InP").name == "InP"

    def test_missing_required_material(self):
        """Tables lacking one of the three alloys are rejected."""
        text = self.TABLE.split("  InP:")[0]

        with pytest.raises(ConfigError):
            MaterialRepository.from_text(text)

    def test_negative_mass_rejected(self):
        """Non-positive masses fail validation with the field path."""
        text = self.TABLE.replace("m_e: 0.08", "m_e: -0.08")

        with pytest.raises(ConfigError) as exc:
            MaterialRepository.from_text(text)

        assert "m_e" in exc.value.message

    def test_from_file(self, tmp_path):
        """Tables load from disk."""
        path = tmp_path / "table.yaml"
        path.write_text(self.TABLE, encoding="utf-8")

        assert MaterialRepository.from_file(path).source == str(path)

    def test_unreadable_file(self, tmp_path):
        """A missing file is a configuration error."""
        with pytest.raises(ConfigError):
            MaterialRepository.from_file(tmp_path / "absent.yaml")

    def test_load_is_logged(self, caplog):
        """Each table load reports its source and version."""
        log = logging.getLogger("app.MaterialRepository")
        log.addHandler(caplog.handler)
        try:
            with caplog.at_level(logging.INFO, logger="app.MaterialRepository"):
                MaterialRepository.from_text(self.TABLE, source="override.yaml")
        finally:
            log.removeHandler(caplog.handler)

        messages = [record.getMessage() for record in caplog.records]
        assert any("override.yaml" in m and "version=test-1" in m for m in messages)
