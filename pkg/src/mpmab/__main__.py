from mpmab.cli import main

raise SystemExit(main())
