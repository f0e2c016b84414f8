#pragma once

// Physical stand-ins for the vision object classes, staged where the user
// would present them for each object's taught grasp.

#include "handadapt/handsim/geometry.hpp"
#include "handadapt/vision/render.hpp"

namespace handadapt::handsim {

inline SimObject staged_object(vision::ObjectClass o) {
    using vision::ObjectClass;
    switch (o) {
    case ObjectClass::Apple: return {ShapeClass::Sphere, 0.04, Vec3(0.07, 0.005, 0.055)};
    case ObjectClass::Cup: return {ShapeClass::Cylinder, 0.03, Vec3(0.06, 0.0, 0.05), 0.08};
    case ObjectClass::Pitcher: return {ShapeClass::Cylinder, 0.01, Vec3(0.06, 0.0, 0.03), 0.08}; // handle
    case ObjectClass::Box: return {ShapeClass::Box, 0.01, Vec3(0.03, 0.04, 0.02)};
    case ObjectClass::Spoon: return {ShapeClass::Cylinder, 0.008, Vec3(0.062, 0.022, 0.03), 0.044}; // handle
    case ObjectClass::Dice: return {ShapeClass::Box, 0.01, Vec3(0.06, 0.03, 0.035)};
    case ObjectClass::Banana: return {ShapeClass::Cylinder, 0.015, Vec3(0.06, 0.022, 0.035), 0.044};
    }
    return {};
}

} // namespace handadapt::handsim
