#include "kt/protocol/mapping.hpp"

#include <map>
#include <optional>

#include "kt/error.hpp"

namespace kt::protocol {

namespace {

std::map<std::string, std::size_t> index_names(const std::vector<std::string>& names, const char* side) {
    std::map<std::string, std::size_t> out;
    for (std::size_t i = 0; i < names.size(); ++i)
        if (!out.emplace(names[i], i).second)
            fail(Errc::invalid_argument, std::string("duplicate ") + side + " class name '" + names[i] + "'");
    return out;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '\\' || c == '=' || c == ';') out.push_back('\\');
        out.push_back(c);
    }
    return out;
}

}  // namespace

ClassMapping ClassMapping::build(std::vector<std::string> teacher_classes, std::vector<std::string> student_classes,
                                 const std::vector<std::pair<std::string, std::string>>& pairs) {
    if (teacher_classes.size() != student_classes.size())
        fail(Errc::class_count_mismatch, "teacher has " + std::to_string(teacher_classes.size()) +
                                             " classes, student has " + std::to_string(student_classes.size()));
    require(!teacher_classes.empty(), "class mapping needs at least one class");
    const auto t_index = index_names(teacher_classes, "teacher");
    const auto s_index = index_names(student_classes, "student");

    const auto n = teacher_classes.size();
    std::vector<std::optional<std::size_t>> fwd(n), bwd(n);
    for (const auto& [t, s] : pairs) {
        const auto ti = t_index.find(t);
        if (ti == t_index.end()) fail(Errc::non_bijective, "unknown teacher class '" + t + "' in mapping");
        const auto si = s_index.find(s);
        if (si == s_index.end()) fail(Errc::non_bijective, "unknown student class '" + s + "' in mapping");
        if (fwd[ti->second]) fail(Errc::non_bijective, "teacher class '" + t + "' is mapped twice");
        if (bwd[si->second])
            fail(Errc::non_bijective, "student class '" + s + "' is the target of both '" +
                                          teacher_classes[*bwd[si->second]] + "' and '" + t + "'");
        fwd[ti->second] = si->second;
        bwd[si->second] = ti->second;
    }
    for (std::size_t i = 0; i < n; ++i)
        if (!fwd[i]) fail(Errc::non_bijective, "teacher class '" + teacher_classes[i] + "' has no target");

    ClassMapping m;
    m.teacher_classes_ = std::move(teacher_classes);
    m.student_classes_ = std::move(student_classes);
    for (std::size_t i = 0; i < n; ++i) {
        m.forward_.push_back(*fwd[i]);
        m.backward_.push_back(*bwd[i]);
    }
    return m;
}

ClassMapping ClassMapping::index_order(std::vector<std::string> teacher_classes,
                                       std::vector<std::string> student_classes) {
    std::vector<std::pair<std::string, std::string>> pairs;
    for (std::size_t i = 0; i < std::min(teacher_classes.size(), student_classes.size()); ++i)
        pairs.emplace_back(teacher_classes[i], student_classes[i]);
    return build(std::move(teacher_classes), std::move(student_classes), pairs);
}

std::size_t ClassMapping::transform(std::size_t teacher_label) const {
    if (teacher_label >= forward_.size())
        fail(Errc::unmapped_label, "teacher label " + std::to_string(teacher_label) + " is not in the mapping (" +
                                       std::to_string(forward_.size()) + " classes)");
    return forward_[teacher_label];
}

std::size_t ClassMapping::inverse(std::size_t student_label) const {
    if (student_label >= backward_.size())
        fail(Errc::unmapped_label, "student label " + std::to_string(student_label) + " is not in the mapping");
    return backward_[student_label];
}

std::string ClassMapping::canonical() const {
    std::string out;
    for (std::size_t i = 0; i < forward_.size(); ++i) {
        if (i) out.push_back(';');
        out += escape(teacher_classes_[i]) + "=" + escape(student_classes_[forward_[i]]);
    }
    return out;
}

std::uint64_t ClassMapping::digest() const { return fnv1a64(canonical()); }

std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace kt::protocol
