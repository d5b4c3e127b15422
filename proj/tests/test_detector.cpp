#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "helmetcv/errors.hpp"
#include "helmetcv/detector.hpp"
#include "synthetic_gt.hpp"

using namespace helmetcv;

namespace {

ReplayDetector load(const std::string& text) {
  std::istringstream in(text);
  return ReplayDetector::load(in);
}

DetectionRequest request(const std::string& key, const std::string& prompt, double threshold) {
  return {ImageKey::parse(key), prompt, threshold, std::nullopt};
}

const char* kReplay =
    R"({"image_key":"001/5","prompt":"motorcycle","detections":[{"x":1,"y":2,"w":3,"h":4,"score":0.2},{"x":10,"y":20,"w":30,"h":40,"score":0.9},{"x":5,"y":5,"w":5,"h":5,"score":0.5}]})"
    "\n";

}  // namespace

TEST(ImageKey, RoundTrip) {
  EXPECT_EQ(ImageKey::parse("001/5").str(), "001/5");
  const ImageKey k = ImageKey::parse("v01/12@10,20,30,40");
  EXPECT_EQ(k.video_id, "v01");
  EXPECT_EQ(k.frame_index, 12);
  EXPECT_EQ(k.crop, (PixelRect{10, 20, 30, 40}));
  EXPECT_EQ(k.str(), "v01/12@10,20,30,40");
  EXPECT_EQ(k.frame_key().str(), "v01/12");
}

TEST(ImageKey, Malformed) {
  EXPECT_THROW(ImageKey::parse("nokey"), UsageError);
  EXPECT_THROW(ImageKey::parse("a/x"), UsageError);
  EXPECT_THROW(ImageKey::parse("a/1@1,2,3"), UsageError);
}

TEST(DetectionRequest, ThresholdOutsideUnitIntervalIsUsageError) {
  EXPECT_THROW(request("001/5", "motorcycle", 1.5).validate(), UsageError);
  EXPECT_THROW(request("001/5", "motorcycle", -0.1).validate(), UsageError);
  EXPECT_THROW(request("001/5", "", 0.5).validate(), UsageError);
  EXPECT_NO_THROW(request("001/5", "motorcycle", 1.0).validate());
}

TEST(ReplayDetector, FiltersAndSortsByScore) {
  auto det = load(kReplay);
  const auto out = det.detect(request("001/5", "motorcycle", 0.3));
  ASSERT_EQ(out.size(), 2u);
  EXPECT_DOUBLE_EQ(out[0].score, 0.9);
  EXPECT_DOUBLE_EQ(out[1].score, 0.5);
  for (const auto& d : out) EXPECT_EQ(d.prompt, "motorcycle");
  EXPECT_EQ(det.misses(), 0u);
}

TEST(ReplayDetector, ThresholdAboveMaxScoreIsEmpty) {
  auto det = load(kReplay);
  EXPECT_TRUE(det.detect(request("001/5", "motorcycle", 0.91)).empty());
  EXPECT_EQ(det.detect(request("001/5", "motorcycle", 0.9)).size(), 1u);
}

TEST(ReplayDetector, MissingRecordIsCountedMiss) {
  auto det = load(kReplay);
  EXPECT_TRUE(det.detect(request("001/6", "motorcycle", 0.0)).empty());
  EXPECT_TRUE(det.detect(request("001/5", "person", 0.0)).empty());
  EXPECT_EQ(det.misses(), 2u);
}

TEST(ReplayDetector, MonotoneInThreshold) {
  auto det = load(kReplay);
  std::size_t previous = SIZE_MAX;
  for (double t = 0.0; t <= 1.0; t += 0.05) {
    const auto n = det.detect(request("001/5", "motorcycle", t)).size();
    EXPECT_LE(n, previous);
    previous = n;
  }
}

TEST(ReplayDetector, ParseErrorsCarryLineNumbers) {
  const std::string good = kReplay;
  const auto expect_line = [](const std::string& text, std::size_t line) {
    try {
      load(text);
      FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
      EXPECT_EQ(e.line(), line) << e.what();
    }
  };
  expect_line(good + "{not json\n", 2);
  expect_line(good + good, 2);  // duplicate (key, prompt)
  expect_line(R"({"image_key":"001/5","prompt":"p","detections":[{"x":0,"y":0,"w":1,"h":1,"score":1.5}]})" "\n", 1);
  expect_line(R"({"image_key":"001/5","prompt":"p"})" "\n", 1);
}

TEST(ReplayDetector, CanonicalSerializationIsByteStable) {
  const std::string text =
      R"({"prompt":"person","image_key":"002/1@3,4,50,60","detections":[{"score":0.25,"h":4.5,"w":3,"y":2,"x":0.1}]})"
      "\n" R"({"image_key":"001/0","prompt":"motorcycle","detections":[]})" "\n";
  auto first = load(text);
  std::ostringstream a;
  first.serialize(a);
  std::istringstream again_in(a.str());
  auto second = ReplayDetector::load(again_in);
  std::ostringstream b;
  second.serialize(b);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_NE(a.str().find("\"score\":0.250000"), std::string::npos) << a.str();
  EXPECT_NE(a.str().find("\"x\":0.1"), std::string::npos) << a.str();
}

TEST(NoiseConfig, Validation) {
  EXPECT_THROW(NoiseConfig::from_json_text(R"({"drop_rate": 1.5})"), UsageError);
  EXPECT_THROW(NoiseConfig::from_json_text(R"({"spurious_rate": -1})"), UsageError);
  EXPECT_THROW(NoiseConfig::from_json_text("{"), ParseError);
  const auto cfg = NoiseConfig::from_json_text(R"({"drop_rate":0.25,"seed":9})");
  EXPECT_DOUBLE_EQ(cfg.drop_rate, 0.25);
  EXPECT_EQ(cfg.seed, 9u);
}

TEST(SyntheticDetector, NoNoiseReproducesGroundTruth) {
  const auto gt = testdata::grid_annotations({.videos = 1, .frames = 3, .motorcycles_per_frame = 4});
  SyntheticDetector det(gt, NoiseConfig{});
  for (const auto& frame : gt) {
    auto out = det.detect(request(frame.key(), "motorcycle", 0.5));
    ASSERT_EQ(out.size(), frame.objects.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      EXPECT_EQ(out[i].box, frame.objects[i].box);
      EXPECT_DOUBLE_EQ(out[i].score, 1.0);
    }
  }
}

TEST(SyntheticDetector, ResizedRequestsComeBackInModelInputSpace) {
  const auto gt = testdata::grid_annotations({.videos = 1, .frames = 1, .motorcycles_per_frame = 1});
  SyntheticDetector det(gt, NoiseConfig{});
  DetectionRequest r = request("001/0", "motorcycle", 0.0);
  r.resize_to = kModelInputSize;
  const auto out = det.detect(r);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].box.space, CoordSpace::model_input());
  EXPECT_EQ(out[0].box, rescale_box(gt[0].objects[0].box, kFrameSize, kModelInputSize, CoordSpace::model_input()));
}

TEST(SyntheticDetector, UnknownFrameIsNotFound) {
  SyntheticDetector det(testdata::grid_annotations({}), NoiseConfig{});
  EXPECT_THROW(det.detect(request("999/0", "motorcycle", 0.0)), NotFoundError);
}

TEST(SyntheticDetector, DeterministicForSeed) {
  const auto gt = testdata::grid_annotations({.videos = 2, .frames = 4, .motorcycles_per_frame = 3});
  NoiseConfig cfg;
  cfg.drop_rate = 0.3;
  cfg.spurious_rate = 2.0;
  cfg.jitter_sigma = 4.0;
  cfg.tp_score = {0.4, 1.0};
  cfg.seed = 17;
  SyntheticDetector a(gt, cfg), b(gt, cfg);
  for (const auto& frame : gt) {
    const auto x = a.detect(request(frame.key(), "motorcycle", 0.0));
    const auto y = b.detect(request(frame.key(), "motorcycle", 0.0));
    ASSERT_EQ(x.size(), y.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      EXPECT_EQ(x[i].box, y[i].box);
      EXPECT_EQ(x[i].score, y[i].score);
    }
  }
}

TEST(SyntheticDetector, DropRateIsBinomial) {
  const auto gt = testdata::grid_annotations({.videos = 10, .frames = 100, .motorcycles_per_frame = 5});
  NoiseConfig cfg;
  cfg.drop_rate = 0.2;
  cfg.seed = 3;
  SyntheticDetector det(gt, cfg);
  long long kept = 0, total = 0;
  for (const auto& frame : gt) {
    kept += static_cast<long long>(det.detect(request(frame.key(), "motorcycle", 0.0)).size());
    total += static_cast<long long>(frame.objects.size());
  }
  // 5000 trials: sd of the kept fraction is sqrt(0.16/5000) ~ 0.0057; allow 4 sd.
  EXPECT_NEAR(double(kept) / double(total), 0.8, 0.023);
}

TEST(SyntheticDetector, CropRequestsAreInCropSpace) {
  const auto gt = testdata::grid_annotations({.videos = 1, .frames = 1, .motorcycles_per_frame = 1, .with_riders = true});
  SyntheticDetector det(gt, NoiseConfig{});
  const auto out = det.detect(request("001/0@0,400,400,500", "person", 0.0));
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].box, (Box{120, 260, 80, 200, CoordSpace::crop({0, 400})}));
}

TEST(RecordingDetector, ReplaysWhatItRecorded) {
  const auto gt = testdata::grid_annotations({.videos = 1, .frames = 2, .motorcycles_per_frame = 2});
  NoiseConfig cfg;
  cfg.spurious_rate = 1.5;
  cfg.tp_score = {0.2, 1.0};
  cfg.seed = 5;
  SyntheticDetector synth(gt, cfg);
  RecordingDetector rec(synth);
  std::vector<std::vector<ScoredDetection>> live;
  for (const auto& f : gt) live.push_back(rec.detect(request(f.key(), "motorcycle", 0.0)));

  ReplayDetector replay(rec.records());
  for (std::size_t i = 0; i < gt.size(); ++i) {
    for (double t : {0.0, 0.3, 0.7}) {
      const auto again = replay.detect(request(gt[i].key(), "motorcycle", t));
      std::vector<ScoredDetection> expected = live[i];
      filter_and_sort(expected, t);
      ASSERT_EQ(again.size(), expected.size());
      for (std::size_t k = 0; k < again.size(); ++k) {
        EXPECT_EQ(again[k].box, expected[k].box);
        EXPECT_DOUBLE_EQ(again[k].score, expected[k].score);
      }
    }
  }
}
