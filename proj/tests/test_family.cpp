#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "famtree/family.hpp"

using famtree::FamilyIndexSet;
using famtree::Hole;
using famtree::HoleAssignment;
using famtree::HoleSpace;

TEST_CASE("index set algebra keeps cardinality consistent") {
    FamilyIndexSet a(130), b(130);
    for (std::size_t i = 0; i < 130; i += 3) a.insert(i);
    for (std::size_t i = 0; i < 130; i += 5) b.insert(i);
    FamilyIndexSet inter = a & b;
    FamilyIndexSet uni = a | b;
    FamilyIndexSet diff = a - b;
    REQUIRE(inter.count() + uni.count() == a.count() + b.count());
    REQUIRE(diff.count() == a.count() - inter.count());
    inter.for_each([&](std::size_t i) {
        REQUIRE(i % 15 == 0);
    });
    REQUIRE(inter.is_subset_of(a));
    REQUIRE(inter.is_subset_of(b));
    REQUIRE(a.is_subset_of(uni));
}

TEST_CASE("index set run-length encoding round-trips") {
    std::mt19937_64 rng(7);
    FamilyIndexSet s(200);
    std::uniform_int_distribution<int> coin(0, 1);
    for (std::size_t i = 0; i < 200; ++i)
        if (coin(rng)) s.insert(i);
    FamilyIndexSet back(200);
    for (auto [start, len] : s.runs())
        for (std::size_t i = 0; i < len; ++i) back.insert(start + i);
    REQUIRE(back == s);
}

TEST_CASE("hole space enumerates lexicographically") {
    HoleSpace space({Hole{"OX", {2, 3, 4, 5}}, Hole{"OY", {2, 3, 4}}});
    REQUIRE(space.size() == 12);
    REQUIRE(space.assignment(0).values == std::vector<std::int64_t>{2, 2});
    REQUIRE(space.assignment(11).values == std::vector<std::int64_t>{5, 4});
    REQUIRE(space.assignment(3).values == std::vector<std::int64_t>{3, 2});
    for (std::uint64_t i = 0; i < space.size(); ++i)
        REQUIRE(space.index_of(space.assignment(i)) == i);
    REQUIRE(space.describe(0) == "(OX=2,OY=2)");
}

TEST_CASE("hole space value masks partition the family") {
    HoleSpace space({Hole{"A", {0, 1, 2}}, Hole{"B", {5, 9}}});
    FamilyIndexSet all(space.size());
    for (std::size_t v = 0; v < 3; ++v) {
        const auto& mask = space.value_mask(0, v);
        REQUIRE(mask.count() == 2);
        REQUIRE((all & mask).empty());
        all.unite_with(mask);
    }
    REQUIRE(all.count() == space.size());
}

TEST_CASE("zero holes yield a single empty assignment") {
    HoleSpace space{};
    REQUIRE(space.size() == 1);
    REQUIRE(space.assignment(0).values.empty());
}

TEST_CASE("family size cap is enforced") {
    std::vector<famtree::Hole> holes;
    for (int h = 0; h < 9; ++h) {
        famtree::Hole hole;
        hole.name = "H" + std::to_string(h);
        for (int v = 0; v < 100; ++v) hole.values.push_back(v);
        holes.push_back(hole);
    }
    REQUIRE_THROWS_AS(HoleSpace(holes, 1ULL << 32), std::length_error);
}
