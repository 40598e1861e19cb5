#pragma once

#include <bit>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace famtree {

/// Set of family identifiers, i.e. indices into the enumerated hole-assignment
/// space. Fixed-width bitset with a cached cardinality; all subfamily algebra
/// (splits, restrictions, consistency sets) runs on these.
class FamilyIndexSet {
public:
    FamilyIndexSet() : size_(0), count_(0) {}
    explicit FamilyIndexSet(std::size_t size, bool filled = false)
        : blocks_((size + 63) / 64, filled ? ~0ULL : 0ULL), size_(size) {
        if (filled && size % 64 != 0) blocks_.back() &= (1ULL << (size % 64)) - 1;
        count_ = filled ? size : 0;
    }

    static FamilyIndexSet singleton(std::size_t size, std::size_t index) {
        FamilyIndexSet s(size);
        s.insert(index);
        return s;
    }

    std::size_t universe_size() const { return size_; }
    std::size_t count() const { return count_; }
    bool empty() const { return count_ == 0; }

    bool contains(std::size_t i) const {
        return (blocks_[i / 64] >> (i % 64)) & 1ULL;
    }
    void insert(std::size_t i) {
        std::uint64_t& b = blocks_[i / 64];
        std::uint64_t m = 1ULL << (i % 64);
        if (!(b & m)) { b |= m; ++count_; }
    }

    FamilyIndexSet& intersect_with(const FamilyIndexSet& o) {
        for (std::size_t k = 0; k < blocks_.size(); ++k) blocks_[k] &= o.blocks_[k];
        recount();
        return *this;
    }
    FamilyIndexSet& unite_with(const FamilyIndexSet& o) {
        for (std::size_t k = 0; k < blocks_.size(); ++k) blocks_[k] |= o.blocks_[k];
        recount();
        return *this;
    }
    FamilyIndexSet& subtract(const FamilyIndexSet& o) {
        for (std::size_t k = 0; k < blocks_.size(); ++k) blocks_[k] &= ~o.blocks_[k];
        recount();
        return *this;
    }

    friend FamilyIndexSet operator&(FamilyIndexSet a, const FamilyIndexSet& b) { return a.intersect_with(b); }
    friend FamilyIndexSet operator|(FamilyIndexSet a, const FamilyIndexSet& b) { return a.unite_with(b); }
    friend FamilyIndexSet operator-(FamilyIndexSet a, const FamilyIndexSet& b) { return a.subtract(b); }

    bool intersects(const FamilyIndexSet& o) const {
        for (std::size_t k = 0; k < blocks_.size(); ++k)
            if (blocks_[k] & o.blocks_[k]) return true;
        return false;
    }
    bool is_subset_of(const FamilyIndexSet& o) const {
        for (std::size_t k = 0; k < blocks_.size(); ++k)
            if (blocks_[k] & ~o.blocks_[k]) return false;
        return true;
    }
    friend bool operator==(const FamilyIndexSet& a, const FamilyIndexSet& b) {
        return a.size_ == b.size_ && a.blocks_ == b.blocks_;
    }
    friend bool operator!=(const FamilyIndexSet& a, const FamilyIndexSet& b) { return !(a == b); }

    std::size_t first() const {
        for (std::size_t k = 0; k < blocks_.size(); ++k)
            if (blocks_[k]) return k * 64 + std::countr_zero(blocks_[k]);
        throw std::logic_error("first() on empty index set");
    }

    template <typename F>
    void for_each(F&& fn) const {
        for (std::size_t k = 0; k < blocks_.size(); ++k) {
            std::uint64_t b = blocks_[k];
            while (b) {
                fn(k * 64 + std::countr_zero(b));
                b &= b - 1;
            }
        }
    }

    std::vector<std::size_t> to_indices() const {
        std::vector<std::size_t> out;
        out.reserve(count_);
        for_each([&](std::size_t i) { out.push_back(i); });
        return out;
    }

    /// Run-length encoding as (start, length) pairs; stable listing for exports.
    std::vector<std::pair<std::size_t, std::size_t>> runs() const {
        std::vector<std::pair<std::size_t, std::size_t>> out;
        std::size_t i = 0;
        while (i < size_) {
            if (!contains(i)) { ++i; continue; }
            std::size_t start = i;
            while (i < size_ && contains(i)) ++i;
            out.emplace_back(start, i - start);
        }
        return out;
    }

private:
    void recount() {
        std::size_t c = 0;
        for (std::uint64_t b : blocks_) c += std::popcount(b);
        count_ = c;
    }

    std::vector<std::uint64_t> blocks_;
    std::size_t size_;
    std::size_t count_;
};

/// One undefined integer constant of a sketch together with its finite domain.
struct Hole {
    std::string name;
    std::vector<std::int64_t> values; // distinct, source order preserved
};

/// A complete choice of one value per hole; identifies one family member.
struct HoleAssignment {
    std::vector<std::int64_t> values; // by hole declaration order

    friend bool operator==(const HoleAssignment& a, const HoleAssignment& b) {
        return a.values == b.values;
    }
};

/// The enumerated assignment space: mixed-radix indexing with the first hole
/// most significant, so enumeration order is lexicographic over domains in
/// declaration order.
class HoleSpace {
public:
    HoleSpace() : total_(1) {}

    explicit HoleSpace(std::vector<Hole> holes, std::uint64_t cap = (1ULL << 32))
        : holes_(std::move(holes)) {
        strides_.assign(holes_.size(), 1);
        total_ = 1;
        for (std::size_t h = holes_.size(); h-- > 0;) {
            if (holes_[h].values.empty()) throw std::invalid_argument("hole with empty domain");
            strides_[h] = total_;
            std::uint64_t d = holes_[h].values.size();
            if (total_ > cap / d + 1 || total_ * d > cap)
                throw std::length_error("family size exceeds the configured cap");
            total_ *= d;
        }
        build_value_masks();
    }

    const std::vector<Hole>& holes() const { return holes_; }
    std::size_t hole_count() const { return holes_.size(); }
    std::uint64_t size() const { return total_; }

    std::size_t domain_size(std::size_t hole) const { return holes_[hole].values.size(); }

    /// Position of hole `hole` in assignment number `index` (a domain index).
    std::size_t digit(std::uint64_t index, std::size_t hole) const {
        return (index / strides_[hole]) % holes_[hole].values.size();
    }

    HoleAssignment assignment(std::uint64_t index) const {
        HoleAssignment a;
        a.values.reserve(holes_.size());
        for (std::size_t h = 0; h < holes_.size(); ++h)
            a.values.push_back(holes_[h].values[digit(index, h)]);
        return a;
    }

    std::uint64_t index_of(const HoleAssignment& a) const {
        if (a.values.size() != holes_.size())
            throw std::invalid_argument("incomplete hole assignment");
        std::uint64_t idx = 0;
        for (std::size_t h = 0; h < holes_.size(); ++h) {
            std::size_t pos = domain_position(h, a.values[h]);
            idx += pos * strides_[h];
        }
        return idx;
    }

    std::size_t domain_position(std::size_t hole, std::int64_t value) const {
        const auto& vals = holes_[hole].values;
        for (std::size_t k = 0; k < vals.size(); ++k)
            if (vals[k] == value) return k;
        throw std::invalid_argument("value outside hole domain: " + holes_[hole].name +
                                    "=" + std::to_string(value));
    }

    FamilyIndexSet full_set() const { return FamilyIndexSet(total_, true); }

    /// All indices whose hole `hole` takes its `valueIndex`-th domain value.
    const FamilyIndexSet& value_mask(std::size_t hole, std::size_t valueIndex) const {
        return value_masks_[hole][valueIndex];
    }

    std::string describe(std::uint64_t index) const {
        std::string s = "(";
        for (std::size_t h = 0; h < holes_.size(); ++h) {
            if (h) s += ",";
            s += holes_[h].name + "=" + std::to_string(holes_[h].values[digit(index, h)]);
        }
        return s + ")";
    }

private:
    void build_value_masks() {
        value_masks_.resize(holes_.size());
        for (std::size_t h = 0; h < holes_.size(); ++h) {
            value_masks_[h].assign(holes_[h].values.size(), FamilyIndexSet(total_));
            for (std::uint64_t i = 0; i < total_; ++i)
                value_masks_[h][digit(i, h)].insert(i);
        }
    }

    std::vector<Hole> holes_;
    std::vector<std::uint64_t> strides_;
    std::uint64_t total_;
    std::vector<std::vector<FamilyIndexSet>> value_masks_;
};

} // namespace famtree
