#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "tsrecon/config.hpp"
#include "tsrecon/io.hpp"

using namespace tsrecon;
namespace fs = std::filesystem;

namespace {

io::MeasurementTable parse(const std::string& text) {
  std::istringstream in(text);
  return io::parse_measurements(in, "test.csv");
}

std::string error_of(const std::string& text) {
  try {
    parse(text);
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(Csv, SplitHandlesQuotes) {
  const auto cells = io::split_csv_line(R"(a,"b,c", d ,"e""f")");
  ASSERT_EQ(cells.size(), 4u);
  EXPECT_EQ(cells[1], "b,c");
  EXPECT_EQ(io::trim(cells[2]), "d");
  EXPECT_EQ(cells[3], "e\"f");
}

TEST(Measurements, ThreeRows) {
  const auto t = parse("node_id,lts_seconds,light\nn1,0,1.5\nn1,1200,2.5\nn1,2400,3.5\n");
  EXPECT_EQ(t.rows, 3u);
  ASSERT_EQ(t.records.size(), 3u);
  EXPECT_DOUBLE_EQ(t.records[2].record.lts, 2400.0);
  EXPECT_DOUBLE_EQ(t.records[1].record.channels.at("light"), 2.5);
  EXPECT_FALSE(t.records[0].reboot_counter.has_value());
}

TEST(Measurements, ExtraChannelRetained) {
  const auto t = parse("node_id,lts_seconds,light,soil_temp\nn1,0,1,20.5\nn1,60,2,\n");
  ASSERT_EQ(t.channels.size(), 2u);
  EXPECT_EQ(t.channels[1], "soil_temp");
  EXPECT_DOUBLE_EQ(t.records[0].record.channels.at("soil_temp"), 20.5);
  EXPECT_FALSE(t.records[1].record.channels.contains("soil_temp"));
}

TEST(Measurements, CommentsAndBlankLinesSkipped) {
  const auto t = parse("# exported\nnode_id,lts_seconds,light\n\nn1,0,1\n# note\nn1,60,2\n");
  EXPECT_EQ(t.records.size(), 2u);
}

TEST(Measurements, RebootCounterColumn) {
  const auto t = parse("node_id,reboot_counter,lts_seconds,light\nn1,4,0,1\nn1,,60,2\n");
  EXPECT_EQ(*t.records[0].reboot_counter, 4);
  EXPECT_FALSE(t.records[1].reboot_counter.has_value());
}

TEST(Measurements, LtsRegressionStartsNewSegment) {
  const auto t = parse("node_id,lts_seconds,light\nn1,0,1\nn1,60,2\nn1,120,3\nn1,30,4\nn1,90,5\n");
  const auto segments = split_segments(t.records);
  ASSERT_EQ(segments.size(), 2u);
  EXPECT_EQ(segments[0].records.size(), 3u);
  EXPECT_EQ(segments[1].records.size(), 2u);
  EXPECT_EQ(segments[1].segment_index, 1);
}

TEST(Measurements, MissingColumnNamed) {
  EXPECT_NE(error_of("node_id,light\nn1,1\n").find("lts_seconds"), std::string::npos);
  EXPECT_NE(error_of("lts_seconds,light\n0,1\n").find("node_id"), std::string::npos);
}

TEST(Measurements, NonNumericReportsLine) {
  const auto msg = error_of("node_id,lts_seconds,light\nn1,0,1\nn1,abc,2\n");
  EXPECT_NE(msg.find("test.csv:3"), std::string::npos) << msg;
  EXPECT_NE(msg.find("lts_seconds"), std::string::npos) << msg;
}

TEST(Measurements, RaggedRowReportsLine) {
  const auto msg = error_of("node_id,lts_seconds,light\nn1,0\n");
  EXPECT_NE(msg.find("test.csv:2"), std::string::npos) << msg;
}

TEST(Measurements, EmptyInputRejected) {
  EXPECT_FALSE(error_of("").empty());
  EXPECT_FALSE(error_of("\n\n").empty());
}

TEST(Measurements, DuplicateHeaderRejected) {
  EXPECT_FALSE(error_of("node_id,lts_seconds,light,light\nn1,0,1,2\n").empty());
}

TEST(Measurements, WriteParseRoundTrip) {
  std::vector<RawRecord> recs{{"a", std::nullopt, {0.5, {{"light", 10.25}}}},
                              {"a", std::nullopt, {60.0, {{"light", 11.0}, {"soil_moisture", 0.2}}}}};
  std::ostringstream out;
  io::write_measurements(out, recs);
  const auto back = parse(out.str());
  ASSERT_EQ(back.records.size(), 2u);
  EXPECT_DOUBLE_EQ(back.records[0].record.lts, 0.5);
  EXPECT_FALSE(back.records[0].record.channels.contains("soil_moisture"));
  EXPECT_DOUBLE_EQ(back.records[1].record.channels.at("soil_moisture"), 0.2);
}

TEST(Anchors, EpochAndIsoTimes) {
  std::istringstream in(
      "node_id,segment_index,lts_seconds,gts_epoch_seconds\n"
      "n1,0,100,1167609600\n"
      "n1,0,200,2007-01-01T00:01:40Z\n");
  const auto a = io::parse_anchors(in, "anchors.csv");
  ASSERT_EQ(a.size(), 2u);
  EXPECT_DOUBLE_EQ(a[0].point.gts, 1167609600.0);
  EXPECT_DOUBLE_EQ(a[1].point.gts, 1167609700.0);
  EXPECT_EQ(a[1].segment_index, 0);
}

TEST(Anchors, BadTimeReportsLine) {
  std::istringstream in("node_id,segment_index,lts_seconds,gts_epoch_seconds\nn1,0,1,yesterday\n");
  try {
    io::parse_anchors(in, "anchors.csv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("anchors.csv:2"), std::string::npos);
  }
}

TEST(TimedValues, GlobalOrFitted) {
  std::istringstream rain("gts_epoch_seconds,ppt_cm\n100,4.5\n200,0\n");
  const auto r = io::parse_timed_values(rain, "rain.csv");
  ASSERT_EQ(r.size(), 2u);
  EXPECT_DOUBLE_EQ(r[0].value, 4.5);
  std::istringstream local("lts_seconds,soil_moisture\n10,0.3\n");
  const auto m = io::parse_timed_values(local, "sm.csv", "", LinearFit{2.0, 1000.0});
  EXPECT_DOUBLE_EQ(m[0].gts, 1020.0);
  std::istringstream bare("lts_seconds,soil_moisture\n10,0.3\n");
  EXPECT_THROW(io::parse_timed_values(bare, "sm.csv"), Error);
}

TEST(Numbers, ExactRoundTrips) {
  for (double v : {0.1, 1167609600.123, 1.0001, -3.5e-7, 86400.0}) EXPECT_EQ(std::stod(io::exact(v)), v);
  EXPECT_EQ(io::fixed(1.23456), "1.235");
}

TEST(Json, TruthRoundTrip) {
  SyntheticSpec spec;
  spec.duration_days = 5.0;
  spec.reboots = {spec.start + 2.5 * kSecondsPerDay};
  const auto dep = generate_deployment(spec, 11);
  const auto j = io::truth_to_json(dep, spec);
  EXPECT_EQ(j.at("seed").get<std::uint64_t>(), 11u);
  EXPECT_EQ(j.at("rng").get<std::string>(), Rng::kAlgorithm);
  const auto back = io::truth_from_json(j);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].segment_index, 1);
  EXPECT_DOUBLE_EQ(back[1].fit.beta, dep.truth[1].fit.beta);
  EXPECT_DOUBLE_EQ(back[0].fit.alpha, dep.truth[0].fit.alpha);
}

TEST(Json, LinesDocumentsAndArrays) {
  const fs::path dir = fs::path(TSRECON_TEST_TMP) / "io_json";
  fs::create_directories(dir);
  io::atomic_write(dir / "lines.jsonl", "{\"a\":1}\n\n{\"a\":2}\n");
  io::atomic_write(dir / "array.json", "[{\"a\":1},{\"a\":2},{\"a\":3}]");
  io::atomic_write(dir / "doc.json", "{\n  \"a\": 1\n}\n");
  EXPECT_EQ(io::read_json_file(dir / "lines.jsonl").size(), 2u);
  EXPECT_EQ(io::read_json_file(dir / "array.json").size(), 3u);
  EXPECT_EQ(io::read_json_file(dir / "doc.json").size(), 1u);
  EXPECT_FALSE(fs::exists(dir / "doc.json.tmp"));
}

TEST(Files, MissingInputNamed) {
  try {
    io::parse_measurements(fs::path("/nonexistent/measurements.csv"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/measurements.csv"), std::string::npos);
  }
}

TEST(Settings, AppliesKnownKeysAndRejectsUnknown) {
  Settings s;
  s.assign("rgtr.q=600");
  s.assign("location.lat = 12.5");
  s.assign("extract.threshold_mode=absolute");
  s.assign("bogus.key=1");
  RgtrConfig r;
  GeoLocation loc;
  ExtractionConfig x;
  apply(s, r);
  apply(s, loc);
  apply(s, x);
  EXPECT_DOUBLE_EQ(r.q, 600.0);
  EXPECT_DOUBLE_EQ(loc.latitude, 12.5);
  EXPECT_EQ(x.threshold_mode, ThresholdMode::absolute);
  ASSERT_EQ(s.unused().size(), 1u);
  EXPECT_EQ(s.unused()[0], "bogus.key");
  EXPECT_THROW(s.reject_unused(), ConfigError);
}

TEST(Settings, BadValuesAreConfigErrors) {
  Settings s;
  s.assign("rgtr.q=fast");
  RgtrConfig r;
  EXPECT_THROW(apply(s, r), ConfigError);
  EXPECT_THROW(s.assign("novalue"), ConfigError);
  Settings t;
  t.assign("extract.threshold_mode=sometimes");
  ExtractionConfig x;
  EXPECT_THROW(apply(t, x), ConfigError);
}

TEST(Settings, SyntheticSpecKeys) {
  Settings s;
  s.assign("synth.start=2007-03-01T00:00:00Z");
  s.assign("synth.duration_days=42");
  s.assign("synth.reboots=2007-03-10T00:00:00Z");
  s.assign("synth.storm_days=3,9");
  SyntheticSpec spec;
  apply(s, spec);
  EXPECT_DOUBLE_EQ(spec.start, 1172707200.0);
  EXPECT_DOUBLE_EQ(spec.duration_days, 42.0);
  ASSERT_EQ(spec.reboots.size(), 1u);
  EXPECT_DOUBLE_EQ(spec.reboots[0], 1172707200.0 + 9 * kSecondsPerDay);
  EXPECT_EQ(spec.storm_days, (std::vector<int>{3, 9}));
  EXPECT_TRUE(s.unused().empty());
}
