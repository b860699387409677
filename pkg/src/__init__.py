# PMU Event Classification System
