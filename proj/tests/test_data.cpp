#include "test_support.hpp"

#include <gtest/gtest.h>

#include <fstream>

namespace mtlinear {
namespace {

namespace fs = std::filesystem;
using testing::scratch_dir;

fs::path write_file(const fs::path& dir, const std::string& name, const std::string& text) {
    fs::path p = dir / name;
    std::ofstream(p) << text;
    return p;
}

TEST(LoadCsv, SmallFileKeepsColumnOrder) {
    auto dir = scratch_dir("load_small");
    auto p = write_file(dir, "tiny.csv", "date,b,a\n2020-01-01,1,10\n2020-01-02,2,20\n2020-01-03,3.5,30\n");
    SeriesFrame f = load_csv(p);
    EXPECT_EQ(f.rows(), 3);
    EXPECT_EQ(f.variates(), 2);
    EXPECT_EQ(f.variate_names, (std::vector<std::string>{"b", "a"}));
    EXPECT_DOUBLE_EQ(f.values(2, 0), 3.5);
    EXPECT_DOUBLE_EQ(f.values(1, 1), 20);
    EXPECT_EQ(f.timestamps.front(), "2020-01-01");
    EXPECT_EQ(f.split.train_end, 1u);
    EXPECT_EQ(f.split.val_end, 2u);
    EXPECT_EQ(f.split.test_end, 3u);
}

TEST(LoadCsv, NonNumericCellNamesRowAndColumn) {
    auto dir = scratch_dir("load_bad");
    auto p = write_file(dir, "bad.csv", "date,x,y\nd1,1,2\nd2,3,oops\nd3,5,6\n");
    try {
        load_csv(p);
        FAIL() << "expected an error";
    } catch (const Error& e) {
        std::string msg = e.what();
        EXPECT_NE(msg.find("oops"), std::string::npos);
        EXPECT_NE(msg.find("row 2"), std::string::npos);
        EXPECT_NE(msg.find("'y'"), std::string::npos);
    }
}

TEST(LoadCsv, MissingFileAndTooFewRows) {
    EXPECT_THROW(load_csv("/nonexistent/file.csv"), Error);
    auto dir = scratch_dir("load_short");
    EXPECT_THROW(load_csv(write_file(dir, "one.csv", "date,x\nd1,1\n")), Error);
    EXPECT_THROW(load_csv(write_file(dir, "nan.csv", "date,x\nd1,1\nd2,nan\nd3,2\n")), Error);
    EXPECT_THROW(load_csv(write_file(dir, "nodate.csv", "time,x\nd1,1\nd2,2\nd3,3\n")), Error);
    EXPECT_NO_THROW(load_csv(write_file(dir, "other.csv", "time,x\nd1,1\nd2,2\nd3,3\n"), "time"));
}

TEST(LoadCsv, EttFilesUseFixedMonthSplit) {
    auto dir = scratch_dir("load_ett");
    SeriesFrame synthetic = testing::synthetic_frame(17420, 2, 3);
    auto path = dir / "ETTh1.csv";
    testing::write_csv(path, synthetic, 6);
    SeriesFrame f = load_csv(path);
    EXPECT_EQ(f.split.train_end, 8640u);
    EXPECT_EQ(f.split.val_end, 8640u + 2880u);
    EXPECT_EQ(f.split.test_end, 8640u + 2 * 2880u);

    auto other = dir / "weather.csv";
    testing::write_csv(other, synthetic, 6);
    SeriesFrame g = load_csv(other);
    EXPECT_EQ(g.split.train_end, static_cast<std::size_t>(17420 * 0.7));
    EXPECT_EQ(g.split.test_end, 17420u);
    EXPECT_EQ(g.split.test_end - g.split.val_end, static_cast<std::size_t>(17420 * 0.2));

    SplitOptions fracs;
    fracs.train_frac = 0.5;
    fracs.val_frac = 0.25;
    SeriesFrame h = load_csv(path, "date", fracs);
    EXPECT_EQ(h.split.train_end, 8710u);
    EXPECT_EQ(h.split.val_end, 8710u + 4355u);
}

TEST(LoadCsv, PublicEtth1Shape) {
    fs::path p = testing::data_dir() / "ETTh1.csv";
    if (!fs::exists(p)) GTEST_SKIP() << "ETTh1.csv not available in " << testing::data_dir();
    SeriesFrame f = load_csv(p);
    EXPECT_EQ(f.rows(), 17420);
    EXPECT_EQ(f.variates(), 7);
}

TEST(Normalizer, ConstantVariateFloorsStd) {
    SeriesFrame f;
    f.values = Matrix::Constant(6, 1, 5.0);
    f.variate_names = {"c"};
    f.split = {4, 5, 6};
    std::ostringstream warn;
    NormStats s = fit_normalizer(f, &warn);
    EXPECT_DOUBLE_EQ(s.mean(0), 5.0);
    EXPECT_DOUBLE_EQ(s.std(0), kStdFloor);
    EXPECT_NE(warn.str().find("zero variance"), std::string::npos);
}

TEST(Normalizer, PopulationStdOnTrainRowsOnly) {
    SeriesFrame f;
    f.values.resize(5, 1);
    f.values << 1, 2, 3, 100, -100;
    f.variate_names = {"x"};
    f.split = {3, 4, 5};
    NormStats s = fit_normalizer(f);
    EXPECT_DOUBLE_EQ(s.mean(0), 2.0);
    EXPECT_NEAR(s.std(0), std::sqrt(2.0 / 3.0), 1e-15);
}

TEST(Normalizer, StandardizedColumnIsFixedPoint) {
    SeriesFrame f = testing::synthetic_frame(500, 3, 11);
    f = normalized(f, fit_normalizer(f));
    NormStats again = fit_normalizer(f);
    for (Index c = 0; c < 3; ++c) {
        EXPECT_NEAR(again.mean(c), 0.0, 1e-6);
        EXPECT_NEAR(again.std(c), 1.0, 1e-6);
    }
}

TEST(Normalizer, RoundTripProperty) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        SeriesFrame f = testing::synthetic_frame(40, 4, rng());
        f.values *= std::exp(testing::normal(rng, 3));
        NormStats s = fit_normalizer(f);
        Matrix v = testing::random_matrix(rng, 20, 4, 1e3);
        Matrix back = denormalize(normalize(v, s), s);
        EXPECT_LE((back - v).cwiseAbs().maxCoeff(), 1e-10 * std::max(1.0, v.cwiseAbs().maxCoeff()));
    }
}

SeriesFrame counting_frame(std::size_t rows, SplitBounds split) {
    SeriesFrame f;
    f.values.resize(static_cast<Index>(rows), 2);
    for (std::size_t t = 0; t < rows; ++t) {
        f.values(static_cast<Index>(t), 0) = static_cast<double>(t);
        f.values(static_cast<Index>(t), 1) = -static_cast<double>(t);
    }
    f.variate_names = {"up", "down"};
    f.split = split;
    return f;
}

TEST(Windows, TenRowsLookbackThreeHorizonTwo) {
    SeriesFrame f = counting_frame(12, {10, 11, 12});
    WindowStream s(f, Split::train, 3, 2, 4);
    EXPECT_EQ(s.windows(), 6u);
    EXPECT_EQ(s.batches(), 2u);
    WindowBatch b;
    ASSERT_TRUE(s.next(b));
    EXPECT_EQ(b.size(), 4u);
    EXPECT_EQ(b.lookbacks[1].rows(), 3);
    EXPECT_DOUBLE_EQ(b.lookbacks[1](0, 0), 1.0);
    EXPECT_DOUBLE_EQ(b.targets[1](0, 0), 4.0);
    EXPECT_DOUBLE_EQ(b.targets[1](1, 1), -5.0);
    ASSERT_TRUE(s.next(b));
    EXPECT_EQ(b.size(), 2u);  // partial batch kept
    EXPECT_FALSE(s.next(b));
}

TEST(Windows, CountFormulaExhaustive) {
    for (std::size_t m = 1; m <= 50; ++m) {
        SeriesFrame f = counting_frame(m + 2, {m, m + 1, m + 2});
        for (std::size_t l = 1; l <= m; ++l) {
            for (std::size_t h = 1; l + h <= m; ++h) {
                WindowStream s(f, Split::train, l, h, 7);
                ASSERT_EQ(s.windows(), m - l - h + 1) << m << " " << l << " " << h;
            }
        }
    }
}

TEST(Windows, SplitTooShortIsAnError) {
    SeriesFrame f = counting_frame(12, {10, 11, 12});
    EXPECT_THROW(WindowStream(f, Split::train, 8, 3, 1), Error);
    EXPECT_THROW(WindowStream(f, Split::val, 1, 1, 1), Error);
    EXPECT_THROW(WindowStream(f, Split::train, 3, 2, 0), Error);
}

TEST(Windows, SeededShuffleIsDeterministic) {
    SeriesFrame f = testing::synthetic_frame(300, 2, 1);
    WindowStream a(f, Split::train, 8, 4, 16, 42), b(f, Split::train, 8, 4, 16, 42), c(f, Split::train, 8, 4, 16, 43);
    EXPECT_EQ(a.starts(), b.starts());
    EXPECT_NE(a.starts(), c.starts());
    WindowStream val(f, Split::val, 8, 4, 16, 42);
    EXPECT_TRUE(std::is_sorted(val.starts().begin(), val.starts().end()));
}

TEST(Windows, SplitsAreChronological) {
    SeriesFrame f = testing::synthetic_frame(400, 2, 1);
    const std::size_t l = 12, h = 6;
    WindowStream train(f, Split::train, l, h, 8, 9), val(f, Split::val, l, h, 8), test(f, Split::test, l, h, 8);
    std::size_t train_max = 0;
    for (auto s : train.starts()) train_max = std::max(train_max, s + l + h - 1);
    EXPECT_LT(train_max, *std::min_element(val.starts().begin(), val.starts().end()));
    EXPECT_GE(val.starts().front(), f.split.train_end);
    EXPECT_LE(val.starts().back() + l + h, f.split.val_end);
    EXPECT_GE(test.starts().front(), f.split.val_end);
    EXPECT_LE(test.starts().back() + l + h, f.split.test_end);
}

TEST(Windows, ColumnSubsetSelectsVariates) {
    SeriesFrame f = counting_frame(12, {10, 11, 12});
    WindowStream s(f, Split::train, 2, 1, 1, std::nullopt, {1});
    WindowBatch b;
    ASSERT_TRUE(s.next(b));
    EXPECT_EQ(b.lookbacks[0].cols(), 1);
    EXPECT_DOUBLE_EQ(b.lookbacks[0](1, 0), -1.0);
}

} // namespace
} // namespace mtlinear
