import numpy as np
import pytest

from src.config import config_from_mapping, load_config, parse_config_text
from src.data_processing import (
    ArtifactWriter,
    downsample_histogram,
    read_bitstream,
    read_calibration_csv,
    read_counts,
    read_histogram_csv,
    read_voltage_trace,
    write_bitstream,
    write_calibration_csv,
    write_calibration_fit_csv,
    write_counts,
    write_levels_csv,
    write_voltage_trace,
)
from src.detection_chain import VoltageTrace, calibrate_mapping
from src.errors import ConfigError, FormatError
from src.reference_data import ENTROPY_RESULTS, SETUPS, calibration_points, setup_fields, setups_by_mode_number
from src.sampling import as_count_trace


class TestConfig:
    @pytest.mark.parametrize("name", list(SETUPS))
    def test_bundled_configs(self, data_dir, name):
        config = load_config(str(data_dir / "configs" / f"table1_{name}.cfg"))
        assert config.setup.optical_bandwidth == SETUPS[name]["optical_bandwidth_hz"]
        assert config.quantization_m == ENTROPY_RESULTS[name]["resolution_m"]
        assert config.calibration_file.is_file()
        assert config.noise_std_v <= 0.5 * config.quantization_m * 2.968e-8

    def test_hash_is_stable_and_ignores_outputs(self, data_dir):
        path = str(data_dir / "configs" / "table1_row1.cfg")
        first, second = load_config(path), load_config(path)
        assert first.config_hash() == second.config_hash()
        assert len(first.config_hash()) == 64
        assert first.with_overrides(outputs="elsewhere").config_hash() == first.config_hash()
        assert first.with_overrides(master_seed=1).config_hash() != first.config_hash()

    def test_comments_and_blank_lines(self):
        values = parse_config_text("# header\n\noptical_bandwidth_hz = 13e9  # inline\n")
        assert values == {"optical_bandwidth_hz": "13e9"}

    @pytest.mark.parametrize("text,field", [
        ("colour = blue", "colour"),
        ("sample_count = many", "sample_count"),
        ("sample_count = 1.5", "sample_count"),
    ])
    def test_bad_values_name_the_key(self, text, field):
        values = dict(setup_fields("row1"))
        values = {key: str(value) for key, value in values.items()}
        with pytest.raises(ConfigError) as info:
            config_from_mapping({**values, **parse_config_text(text)})
        assert info.value.field == field

    def test_missing_required_key(self):
        with pytest.raises(ConfigError) as info:
            config_from_mapping({"optical_bandwidth_hz": "13e9", "electrical_bandwidth_hz": "5e9"})
        assert info.value.field == "optical_power_w"

    def test_domain_errors_surface_as_config_errors(self):
        with pytest.raises(ConfigError) as info:
            config_from_mapping({"optical_bandwidth_hz": "-1", "electrical_bandwidth_hz": "5e9", "optical_power_w": "0"})
        assert info.value.field == "optical_bandwidth_hz"

    def test_missing_referenced_file(self, tmp_path):
        values = {key: str(value) for key, value in setup_fields("row1").items()}
        values["noise_trace"] = "absent.csv"
        with pytest.raises(ConfigError) as info:
            config_from_mapping(values, base_dir=tmp_path)
        assert info.value.field == "noise_trace"

    def test_missing_config_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(str(tmp_path / "nope.cfg"))


class TestFormats:
    def test_voltage_trace_keeps_every_digit(self, tmp_path):
        samples = np.array([1.3963e-3, 0.1 + 0.2, -2.968e-8 / 3])
        path = tmp_path / "trace.csv"
        write_voltage_trace(str(path), VoltageTrace(samples, 1e10, "V_com"), ["# config_sha256=abc seed=1 version=x"])
        trace = read_voltage_trace(str(path))
        assert np.array_equal(trace.samples, samples)
        assert trace.sample_rate == 1e10
        assert trace.label == "V_com"

    def test_malformed_trace(self, tmp_path):
        path = tmp_path / "trace.csv"
        path.write_text("# sample_rate_hz=1e10 label=x\n0.1\nabc\n")
        with pytest.raises(FormatError):
            read_voltage_trace(str(path))

    def test_bundled_calibration_csv(self, data_dir):
        points = read_calibration_csv(str(data_dir / "table2_calibration.csv"))
        assert points == calibration_points()
        assert calibrate_mapping(points).volts_per_photon == pytest.approx(2.968e-8, rel=0.005)

    def test_calibration_csv_written_back(self, tmp_path):
        path = tmp_path / "calibration.csv"
        write_calibration_csv(str(path), [(100.0, 1e-6), (200.0, 2.1e-6)])
        assert read_calibration_csv(str(path)) == [(100.0, 1e-6), (200.0, 2.1e-6)]
        path.write_text("photon_count,mean_voltage_v\n100,1e-6,3\n")
        with pytest.raises(FormatError):
            read_calibration_csv(str(path))

    def test_counts_file(self, tmp_path):
        path = tmp_path / "counts.txt"
        write_counts(str(path), as_count_trace([0, 7, 51_000]), ["# seed=1"])
        assert read_counts(str(path)).counts.tolist() == [0, 7, 51_000]

    def test_bitstream_header_and_payload(self, tmp_path):
        bits = np.array([1, 0, 1, 1, 0, 0, 0, 0, 1, 1], dtype=np.uint8)
        path = tmp_path / "out.bin"
        write_bitstream(str(path), bits, {"n": 3, "k": 2, "seed": "b0"})
        assert path.read_bytes().startswith(b"# n=3 k=2 seed=b0 bits=10\n")
        read, header = read_bitstream(str(path))
        assert read.tolist() == bits.tolist()
        assert header["k"] == "2"

    @pytest.mark.parametrize("header", [b"# n=3 k\n", b"# n=3 =2 bits=4\n", b"# n=3 bits=many\n", b"# n=3 bits=64\n", b"\xff\xfe\n"])
    def test_malformed_bitstream_header(self, tmp_path, header):
        path = tmp_path / "junk.bin"
        path.write_bytes(header + b"\x00")
        with pytest.raises(FormatError) as info:
            read_bitstream(str(path))
        assert info.value.field == "bitstream"

    @pytest.mark.parametrize("row", ["0.5", "0.5,0.25,1", "x,0.5"])
    def test_malformed_histogram_row(self, tmp_path, row):
        path = tmp_path / "histogram.csv"
        path.write_text(f"value,frequency\n0,0.5\n{row}\n")
        with pytest.raises(FormatError) as info:
            read_histogram_csv(str(path))
        assert info.value.field == "histogram"

    def test_calibration_fit_rows(self, tmp_path):
        calib = calibrate_mapping(calibration_points())
        path = tmp_path / "calibration_fit.csv"
        write_calibration_fit_csv(str(path), calib, ["# config_sha256=- seed=- version=x"])
        rows = [line.split(",") for line in path.read_text().splitlines() if not line.startswith("#")][1:]
        assert len(rows) == 7
        for n, v, fitted, residual in rows:
            assert float(fitted) == pytest.approx(calib.volts_per_photon * float(n), rel=1e-12)
            assert abs(float(residual)) < 0.01

    def test_sorted_levels(self, tmp_path):
        path = tmp_path / "levels.csv"
        write_levels_csv(str(path), VoltageTrace(np.array([3.0, 1.0, 3.0, 0.5])))
        assert path.read_text().splitlines() == ["index,voltage_v,gap_v", "0,0.5,", "1,1,0.5", "2,3,2"]

    def test_downsampled_histogram(self):
        h = downsample_histogram(np.linspace(0, 1, 1000), 10)
        assert len(h) == 10
        assert h.probabilities.sum() == pytest.approx(1.0)


class TestArtifactWriter:
    def test_commit_moves_files(self, tmp_path):
        with ArtifactWriter(str(tmp_path / "out")) as writer:
            with open(writer.path("a.txt"), "w") as f:
                f.write("a")
        assert [p.name for p in writer.written] == ["a.txt"]
        assert sorted(p.name for p in (tmp_path / "out").iterdir()) == ["a.txt"]

    def test_abort_leaves_nothing(self, tmp_path):
        with pytest.raises(RuntimeError):
            with ArtifactWriter(str(tmp_path / "out")) as writer:
                with open(writer.path("a.txt"), "w") as f:
                    f.write("a")
                raise RuntimeError("interrupted")
        assert list((tmp_path / "out").iterdir()) == []


def test_unknown_setup_names_field():
    with pytest.raises(ConfigError) as info:
        setup_fields("row9")
    assert info.value.field == "setup"


def test_reference_tables_are_ordered_by_mode_number():
    order = setups_by_mode_number()
    modes = [SETUPS[name]["mode_number"] for name in order]
    assert modes == sorted(modes)
    assert set(order) == set(ENTROPY_RESULTS)
