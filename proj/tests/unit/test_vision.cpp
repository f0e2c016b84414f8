#include <gtest/gtest.h>

#include <filesystem>

#include "handadapt/vision/dataset.hpp"
#include "handadapt/vision/render.hpp"

using namespace handadapt;
using namespace handadapt::vision;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("handadapt_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(p);
    return p;
}

TEST(Render, DeterministicForFixedSeed) {
    const auto spec = draw_spec(ObjectClass::Apple, {}, 7);
    EXPECT_EQ(render(spec), render(spec));
}

TEST(Render, ChannelsStayInUnitRange) {
    for (auto cls : kAllObjects) {
        auto img = render(draw_spec(cls, {}, 3));
        for (int y = 0; y < Image::kHeight; ++y)
            for (int x = 0; x < Image::kWidth; ++x)
                for (int c = 0; c < 3; ++c) {
                    EXPECT_GE(img.at(x, y, c), 0.0);
                    EXPECT_LE(img.at(x, y, c), 1.0);
                }
    }
}

TEST(Render, BetweenClassDistanceExceedsWithinClass) {
    double between = 0.0, within = 0.0;
    for (std::uint64_t i = 0; i < 100; ++i) {
        const auto a1 = render(draw_spec(ObjectClass::Apple, {}, 1000 + i));
        const auto a2 = render(draw_spec(ObjectClass::Apple, {}, 5000 + i));
        const auto b = render(draw_spec(ObjectClass::Banana, {}, 9000 + i));
        between += a1.distance(b);
        within += a1.distance(a2);
    }
    EXPECT_GT(between / 100, within / 100);
}

TEST(Render, ScaleShrinksBoundingBox) {
    ObjectSpec small{.cls = ObjectClass::Dice, .scale = 0.5};
    ObjectSpec full{.cls = ObjectClass::Dice, .scale = 1.0};
    const auto bs = bounding_box(object_mask(small));
    const auto bf = bounding_box(object_mask(full));
    ASSERT_FALSE(bs.empty());
    EXPECT_LT(bs.width(), bf.width());
    EXPECT_LT(bs.height(), bf.height());
}

TEST(Dataset, FourExamplesSplitTwoOneOne) {
    DatasetStore store(11);
    const Image img;
    for (int i = 0; i < 4; ++i) store.add_example(img, GraspType::Pinch, Source::Gui);
    const auto c = store.split_counts();
    EXPECT_EQ(c.train, 2u);
    EXPECT_EQ(c.val, 1u);
    EXPECT_EQ(c.test, 1u);
}

TEST(Dataset, SplitFractionsWithinOneExample) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        DatasetStore store(seed);
        const Image img;
        for (std::size_t n = 1; n <= 41; ++n) {
            store.add_example(img, kAllGrasps[n % kGraspCount], Source::Gui);
            const auto c = store.split_counts();
            EXPECT_LE(std::abs(static_cast<double>(c.train) - 0.50 * n), 1.0);
            EXPECT_LE(std::abs(static_cast<double>(c.val) - 0.25 * n), 1.0);
            EXPECT_LE(std::abs(static_cast<double>(c.test) - 0.25 * n), 1.0);
            EXPECT_EQ(c.total(), n);
        }
    }
}

TEST(Dataset, RejectsUnknownLabel) {
    DatasetStore store;
    EXPECT_THROW(store.add_example(Image{}, "power", Source::Gui), InvalidLabel);
    EXPECT_THROW(store.add_example(Image{}, static_cast<GraspType>(9), Source::Gui), InvalidLabel);
    EXPECT_EQ(store.size(), 0u);
}

TEST(Dataset, SixClassCorpusSizes) {
    auto store = generate_corpus(kInitialObjects, 120, 1);
    EXPECT_EQ(store.size(), 720u);
    EXPECT_EQ(store.split_counts().train, 360u);
    for (auto n : store.label_counts()) EXPECT_GT(n, 0u);
    // spoon and dice both carry their own labels: tripod and pinch
    EXPECT_EQ(store.label_counts()[index_of(GraspType::Tripod)], 120u);
}

TEST(Dataset, CorpusReproducibleFromSeed) {
    const std::array classes = {ObjectClass::Cup, ObjectClass::Dice};
    EXPECT_EQ(generate_corpus(classes, 8, 1), generate_corpus(classes, 8, 1));
    EXPECT_FALSE(generate_corpus(classes, 8, 1) == generate_corpus(classes, 8, 2));
}

TEST(Dataset, BananaIncrementIsTripod) {
    const std::array classes = {ObjectClass::Banana};
    auto store = generate_corpus(classes, 20, 5);
    EXPECT_EQ(store.size(), 20u);
    for (const auto& e : store.examples()) EXPECT_EQ(e.label, GraspType::Tripod);
}

TEST(Dataset, CorpusNeedsFourPerClass) {
    const std::array classes = {ObjectClass::Cup};
    EXPECT_THROW(generate_corpus(classes, 3, 1), Error);
}

TEST(Dataset, SaveLoadRoundTrip) {
    const std::array classes = {ObjectClass::Apple, ObjectClass::Spoon};
    auto store = generate_corpus(classes, 6, 3);
    store.add_example(render(draw_spec(ObjectClass::Box, {}, 1)), GraspType::Lateral, Source::Gui, 1234);
    const auto dir = temp_dir("store");
    store.save(dir);
    EXPECT_TRUE(std::filesystem::exists(dir / "manifest.tsv"));
    EXPECT_TRUE(std::filesystem::exists(dir / "spherical"));
    const auto loaded = DatasetStore::load(dir);
    EXPECT_EQ(loaded, store);
    std::filesystem::remove_all(dir);
}

TEST(Dataset, LoadMissingDirectoryFails) {
    EXPECT_THROW(DatasetStore::load("/nonexistent/handadapt"), StorageError);
}

// Nearest-centroid on raw pixels: learnable (better than chance) but not
// trivially separable.
TEST(Dataset, NearestCentroidBaselineAboveChanceBelowPerfect) {
    auto train = generate_corpus(kInitialObjects, 40, 21);
    auto test = generate_corpus(kInitialObjects, 40, 22);
    std::array<std::vector<double>, kGraspCount> centroid;
    std::array<int, kGraspCount> count{};
    for (auto& c : centroid) c.assign(Image::kSize, 0.0);
    for (const auto& e : train.examples()) {
        auto& c = centroid[index_of(e.label)];
        for (std::size_t i = 0; i < Image::kSize; ++i) c[i] += e.image.bytes()[i] / 255.0;
        ++count[index_of(e.label)];
    }
    for (std::size_t k = 0; k < kGraspCount; ++k)
        for (auto& v : centroid[k]) v /= count[k];
    int correct = 0;
    for (const auto& e : test.examples()) {
        double best = 1e300;
        std::size_t arg = 0;
        for (std::size_t k = 0; k < kGraspCount; ++k) {
            double d = 0.0;
            for (std::size_t i = 0; i < Image::kSize; ++i) {
                const double diff = e.image.bytes()[i] / 255.0 - centroid[k][i];
                d += diff * diff;
            }
            if (d < best) best = d, arg = k;
        }
        correct += arg == index_of(e.label);
    }
    const double acc = static_cast<double>(correct) / test.size();
    EXPECT_GT(acc, 1.0 / 6.0);
    EXPECT_LT(acc, 1.0);
    std::cout << "nearest-centroid accuracy: " << acc << "\n";
}

} // namespace
