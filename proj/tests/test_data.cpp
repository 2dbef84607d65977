#include <algorithm>
#include <fstream>
#include <set>

#include "doctest.h"
#include "mtlsar/data.hpp"
#include "mtlsar/error.hpp"
#include "scratch.hpp"

using namespace mtlsar;

namespace {

SyntheticSpec small_spec(std::size_t classes, std::size_t per_class) {
  SyntheticSpec spec;
  spec.num_classes = classes;
  spec.groups = {{17.0, VariantKind::base, 0, per_class, "train"},
                 {15.0, VariantKind::base, 0, per_class, "test"},
                 {30.0, VariantKind::base, 0, 1, "test"},
                 {15.0, VariantKind::configuration, 1, 1, "test"},
                 {15.0, VariantKind::version, 1, 1, "test"}};
  return spec;
}

}  // namespace

TEST_CASE("generate_chip") {
  const SyntheticSpec spec = SyntheticSpec{}.resolved();
  SUBCASE("contracts hold for every class and variant") {
    Rng rng(1);
    for (std::size_t c = 0; c < spec.num_classes; ++c) {
      for (const auto& group : spec.groups) {
        for (int rep = 0; rep < 3; ++rep) {
          const Sample s = generate_chip(spec, c, group, rng);
          REQUIRE(s.image.shape() == Shape{1, 1, 128, 128});
          CHECK(s.label == c);
          const auto [lo, hi] = target_area_range(spec, c, group.variant);
          const double area = static_cast<double>(s.mask.count(1));
          CHECK(area >= lo);
          CHECK(area <= hi);
          double fg = 0.0, bg = 0.0;
          for (std::size_t i = 0; i < s.mask.labels.size(); ++i) (s.mask.labels[i] ? fg : bg) += s.image[i];
          CHECK(fg / area > bg / (128.0 * 128.0 - area));
          for (double v : s.image.values()) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
          }
        }
      }
    }
  }
  SUBCASE("same seed, same chip") {
    Rng a(7), b(7);
    CHECK(generate_chip(spec, 3, spec.groups[0], a) == generate_chip(spec, 3, spec.groups[0], b));
  }
  SUBCASE("invalid class") {
    Rng rng(2);
    CHECK_THROWS_AS(generate_chip(spec, spec.num_classes, spec.groups[0], rng), Error);
  }
}

TEST_CASE("generate_corpus") {
  SUBCASE("default layout is balanced over ten classes") {
    SyntheticSpec spec;
    spec.chip_size = 32;
    const Dataset d = generate_corpus(spec, 3);
    CHECK(d.class_names.size() == 10);
    std::vector<std::size_t> per_class(10, 0);
    for (const auto& s : d.samples) ++per_class[s.label];
    CHECK(std::all_of(per_class.begin(), per_class.end(), [&](std::size_t n) { return n == per_class[0]; }));
  }
  SUBCASE("four classes") {
    const Dataset d = generate_corpus(small_spec(4, 2), 5);
    CHECK(d.class_names.size() == 4);
    CHECK(d.samples.size() == 4 * (2 + 2 + 3));
  }
  SUBCASE("same seed, same corpus") {
    const Dataset a = generate_corpus(small_spec(3, 2), 11);
    const Dataset b = generate_corpus(small_spec(3, 2), 11);
    CHECK(a.samples == b.samples);
  }
}

TEST_CASE("augment_crops") {
  const SyntheticSpec spec = SyntheticSpec{}.resolved();
  Rng rng(4);
  const Sample chip = generate_chip(spec, 0, spec.groups[0], rng);
  SUBCASE("crop equal to the chip copies it") {
    const auto crops = augment_crops(chip, 10, 128, rng);
    REQUIRE(crops.size() == 10);
    for (const auto& c : crops) {
      CHECK(c.image == chip.image);
      CHECK(c.mask == chip.mask);
    }
  }
  SUBCASE("88-pixel crops keep the whole target and share offsets") {
    const auto crops = augment_crops(chip, 10, 88, rng);
    REQUIRE(crops.size() == 10);
    for (const auto& c : crops) {
      CHECK(c.image.shape() == Shape{1, 1, 88, 88});
      CHECK(c.label == chip.label);
      CHECK(c.mask.count(1) == chip.mask.count(1));
      // Locate the offset by matching the image and check the mask moved with it.
      bool found = false;
      for (std::size_t y0 = 0; y0 <= 40 && !found; ++y0)
        for (std::size_t x0 = 0; x0 <= 40 && !found; ++x0) {
          if (crop(chip.image, y0, x0, 88, 88) != c.image) continue;
          found = true;
          for (std::size_t y = 0; y < 88; ++y)
            for (std::size_t x = 0; x < 88; ++x) CHECK(c.mask.at(y, x) == chip.mask.at(y0 + y, x0 + x));
        }
      CHECK(found);
    }
  }
  SUBCASE("a target larger than the crop is rejected") {
    Sample big = chip;
    big.mask = Mask(128, 128, 0);
    big.mask.at(5, 5) = 1;
    big.mask.at(120, 120) = 1;
    CHECK_THROWS_AS(augment_crops(big, 1, 88, rng), Error);
  }
  SUBCASE("233 chips give 2330 crops, topped up to a quota of 2700") {
    SyntheticSpec s = spec;
    s.chip_size = 24;
    AcquisitionGroup g;
    std::vector<Sample> sources;
    for (int i = 0; i < 233; ++i) sources.push_back(generate_chip(s, 1, g, rng));
    CHECK(augment_to_quota(sources, 10, 0, 20, rng).size() == 2330);
    const auto full = augment_to_quota(sources, 10, 2700, 20, rng);
    CHECK(full.size() == 2700);
    CHECK(std::all_of(full.begin(), full.end(), [](const Sample& x) { return x.label == 1; }));
    CHECK(augment_to_quota(sources, 10, 1000, 20, rng).size() == 1000);
  }
}

TEST_CASE("manifest") {
  ScratchDir dir("manifest");
  SUBCASE("export then load gives equal samples") {
    const Dataset d = generate_corpus(small_spec(3, 2), 9);
    export_dataset(d, dir.str());
    const Dataset back = load_manifest(dir / "manifest.csv");
    CHECK(back.class_names == d.class_names);
    REQUIRE(back.samples.size() == d.samples.size());
    for (std::size_t i = 0; i < d.samples.size(); ++i) CHECK(back.samples[i] == d.samples[i]);
  }
  SUBCASE("header only is an empty dataset") {
    std::ofstream(dir / "manifest.csv") << "path,mask_path,class,depression,serial,split\n";
    const Dataset d = load_manifest(dir / "manifest.csv");
    CHECK(d.samples.empty());
  }
  SUBCASE("missing mask path names the row") {
    std::ofstream(dir / "manifest.csv") << "path,mask_path,class,depression,serial,split\n"
                                        << "images/a.png,,tank,17,tank-base,train\n";
    try {
      load_manifest(dir / "manifest.csv");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::data);
      CHECK(std::string(e.what()).find("row 2") != std::string::npos);
      CHECK(std::string(e.what()).find("mask") != std::string::npos);
    }
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_manifest(dir / "nope.csv"), Error);
  }
}

TEST_CASE("scenario splits") {
  const Dataset d = generate_corpus(small_spec(3, 2), 13);
  auto classes = [](const std::vector<Sample>& v) {
    std::set<std::size_t> s;
    for (const auto& x : v) s.insert(x.label);
    return s;
  };
  SUBCASE("SOC") {
    const Split s = make_eoc_splits(d, Scenario::soc);
    CHECK(classes(s.train) == classes(s.test));
    CHECK(s.train.size() == 6);
    CHECK(s.test.size() == 6);
    for (const auto& t : s.test) {
      CHECK(t.meta.depression_deg == 15.0);
      CHECK(variant_of(t.meta.serial) == VariantKind::base);
    }
    for (const auto& t : s.train) CHECK(t.meta.depression_deg == 17.0);
  }
  SUBCASE("EOC-D keeps depression bands apart") {
    const Split s = make_eoc_splits(d, Scenario::eoc_d);
    REQUIRE_FALSE(s.test.empty());
    for (const auto& t : s.test)
      for (const auto& r : s.train) CHECK(std::abs(t.meta.depression_deg - r.meta.depression_deg) >= 10.0);
  }
  SUBCASE("EOC-C and EOC-V test on unseen serials") {
    for (Scenario sc : {Scenario::eoc_c, Scenario::eoc_v}) {
      const Split s = make_eoc_splits(d, sc);
      REQUIRE_FALSE(s.test.empty());
      std::set<std::string> train_serials;
      for (const auto& r : s.train) train_serials.insert(r.meta.serial);
      for (const auto& t : s.test) CHECK(train_serials.count(t.meta.serial) == 0);
      const VariantKind want = sc == Scenario::eoc_c ? VariantKind::configuration : VariantKind::version;
      for (const auto& t : s.test) CHECK(variant_of(t.meta.serial) == want);
    }
  }
  SUBCASE("impossible scenario") {
    SyntheticSpec spec = small_spec(2, 1);
    spec.groups.resize(2);
    CHECK_THROWS_AS(make_eoc_splits(generate_corpus(spec, 1), Scenario::eoc_v), Error);
  }
  SUBCASE("names") {
    CHECK(scenario_name(parse_scenario("eoc-d")) == "EOC-D");
    CHECK(scenario_name(parse_scenario("SOC")) == "SOC");
    CHECK_THROWS_AS(parse_scenario("eoc-x"), Error);
  }
}
