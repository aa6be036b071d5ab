#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace kt::protocol {

/// Bijection from teacher class indices to student class indices.
class ClassMapping {
public:
    ClassMapping() = default;

    /// Pairs are (teacher class name, student class name). Every teacher class
    /// must appear exactly once as a source and every student class exactly once
    /// as a target.
    static ClassMapping build(std::vector<std::string> teacher_classes, std::vector<std::string> student_classes,
                              const std::vector<std::pair<std::string, std::string>>& pairs);

    /// Teacher class i maps to student class i.
    static ClassMapping index_order(std::vector<std::string> teacher_classes, std::vector<std::string> student_classes);

    std::size_t size() const { return forward_.size(); }
    const std::vector<std::string>& teacher_classes() const { return teacher_classes_; }
    const std::vector<std::string>& student_classes() const { return student_classes_; }

    /// Throws unmapped_label for a teacher index outside the mapping.
    std::size_t transform(std::size_t teacher_label) const;
    std::size_t inverse(std::size_t student_label) const;

    /// "teacher=student;..." in teacher index order, names escaped.
    std::string canonical() const;
    /// FNV-1a 64 of canonical().
    std::uint64_t digest() const;

    friend bool operator==(const ClassMapping&, const ClassMapping&) = default;

private:
    std::vector<std::string> teacher_classes_;
    std::vector<std::string> student_classes_;
    std::vector<std::size_t> forward_;
    std::vector<std::size_t> backward_;
};

std::uint64_t fnv1a64(const std::string& bytes);

}  // namespace kt::protocol
